import numpy as np
import pytest

from holosteer.geometry import GateSpec
from holosteer.pauli import PauliOperator as P, adapted_five_qubit_code, bit_flip_code

THETA = np.pi / 6
ACCEPTANCE_LINES = []


def five_qubit_spec(omega=0.1, kappa=1.0):
    return GateSpec(adapted_five_qubit_code(), P.from_string("ZZZII"),
                    P.from_string("XIZXX"), THETA, omega, kappa)


def three_qubit_spec(omega=0.1, kappa=1.0):
    return GateSpec(bit_flip_code(), P.from_string("ZZZ"), P.from_string("XIZ"), THETA,
                    omega, kappa)


@pytest.fixture
def spec5():
    return five_qubit_spec()


@pytest.fixture
def spec3():
    return three_qubit_spec()


def report(criterion: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
