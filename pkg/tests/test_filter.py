import numpy as np
import pytest

from conftest import five_qubit_spec, three_qubit_spec
from holosteer.engine import RunOptions, build_model, run_ensemble
from holosteer.filter import (EstimatorController, EstimatorState, detect_jump,
                              estimator_init, estimator_step, syndrome_readout,
                              write_expectation_csv)
from holosteer.geometry import BASE
from holosteer.linalg import pauli_to_matrix
from holosteer.noise import BitFlipJumps, NoNoise, dissipators
from holosteer.pauli import PauliOperator as P, adapted_five_qubit_code, bit_flip_code
from holosteer.sde import rotated_generators, run_trajectory
from holosteer.steer import build_decode_table


def test_estimator_init():
    est = estimator_init(bit_flip_code())
    ref = np.zeros((8, 8))
    ref[0, 0] = ref[7, 7] = 0.5
    assert np.allclose(est.rho_hat, ref)
    est5 = estimator_init(adapted_five_qubit_code())
    assert np.trace(est5.rho_hat @ est5.rho_hat).real == pytest.approx(0.5)
    assert est5.syndrome == (0, 0, 0, 0)
    assert np.all(est5.expectations == 1)


def test_zero_information_limit(spec5):
    est = estimator_init(spec5.code)
    gens = rotated_generators(spec5, BASE, 7.0)
    out = estimator_step(est, np.array([3.0, -2.0, 0.5, 9.0]), gens, [], 0.0, 1e-2)
    assert np.allclose(out.rho_hat, est.rho_hat)


def _state(ex, bits=None):
    ex = np.asarray(ex, dtype=float)
    syn = tuple(bits) if bits is not None else (0,) * len(ex)
    return EstimatorState(np.eye(1), ex, syn)


def test_readout_threshold_and_hold():
    est = _state([1, 1, 1, 1])
    assert syndrome_readout(est, 0.8, 5.0, 1.0, 0.0) == (0, 0, 0, 0)
    est = _state([-0.9, 1, -0.95, -0.85])
    for k in range(4):
        assert syndrome_readout(est, 0.8, 5.0, 1.0, k) == (0, 0, 0, 0)
    assert syndrome_readout(est, 0.8, 5.0, 1.0, 4.0) == (1, 0, 1, 1)
    assert est.last_change == 4.0


def test_readout_hysteresis_and_reset():
    est = _state([-0.9, 1.0], bits=(1, 0))
    est.expectations = np.array([0.0, 1.0])
    for k in range(10):
        assert syndrome_readout(est, 0.8, 2.0, 1.0, k) == (1, 0)
    est.expectations = np.array([0.9, -0.9])
    syndrome_readout(est, 0.8, 2.0, 1.0, 10)
    est.expectations = np.array([0.5, -0.9])
    # bit 0 counter reset by the dead band, bit 1 completes
    assert syndrome_readout(est, 0.8, 2.0, 1.0, 11) == (1, 1)
    with pytest.raises(ValueError):
        syndrome_readout(est, 1.0)


def test_readout_publishes_joint_flips():
    est = _state([-0.9, 1, 1, 1])
    syndrome_readout(est, 0.8, 3.0, 1.0, 0)
    est.expectations = np.array([-0.9, -0.9, 1, 1])
    out = [syndrome_readout(est, 0.8, 3.0, 1.0, k) for k in range(1, 5)]
    assert (1, 0, 0, 0) not in out
    assert out[-1] == (1, 1, 0, 0)


def test_detect_jump():
    table = build_decode_table(adapted_five_qubit_code(), "ZZZII", "XIZXX")
    ev = detect_jump((0, 0, 0, 0), (1, 1, 0, 0), 3.0, table)
    assert ev.recognized and str(ev.decoded_error) == "IXIII"
    assert detect_jump((0, 0, 0, 0), (0, 0, 0, 0), 3.0, table) is None
    ev = detect_jump((0, 0, 0, 0), (1, 0, 1, 1), 3.0, table)
    assert str(ev.decoded_error) == "XIZXX"
    ev = detect_jump((0, 0, 0, 0), (1, 1, 1, 0), 3.0, table)
    assert not ev.recognized and ev.to_dict()["kind"] == "unrecognized_syndrome"


def test_expectation_csv(tmp_path):
    p = tmp_path / "e.csv"
    write_expectation_csv(p, [0.0, 0.5], [[1.0, 0.9], [0.8, -0.7]])
    lines = p.read_text().splitlines()
    assert lines[0] == "t,generator_index,expectation"
    assert lines[1:] == ["0,0,1", "0,1,0.9", "0.5,0,0.8", "0.5,1,-0.7"]


@pytest.mark.filterwarnings("ignore::holosteer.sde.PositivityWarning")
def test_reference_controller_detects_injection():
    spec = five_qubit_spec(omega=0.1)
    table = build_decode_table(spec.code, spec.H, spec.X)
    # the filter assumes a small flip rate; the truth stays noiseless
    diss = [(r, pauli_to_matrix(p)) for r, p in dissipators(BitFlipJumps(1e-4), spec.code.n)]
    ctrl = EstimatorController(spec, table, diss, dt=0.01, steering=True)
    st = run_trajectory(spec, NoNoise(), 0.01, np.random.default_rng(1), controller=ctrl,
                        injected=[(spec.T / 4, P.from_string("IXIII"))])
    assert ctrl.events, "no detection"
    ev = ctrl.events[0]
    assert ev.syndrome == "1100" and ev.detect_time - spec.T / 4 <= 50
    assert ctrl.decision is not None
    assert any(e["kind"] == "path_switch" for e in st.events)


def test_closed_loop_latency():
    spec = five_qubit_spec(omega=0.1)
    inj = P.from_string("IXIII")
    tau = spec.T / 4
    model = build_model(spec, build_decode_table(spec.code, spec.H, spec.X), extra_ops=[inj])
    res = run_ensemble(model, NoNoise(), 200, 5,
                       RunOptions(dt=0.01, rec_every=10, est_gamma=1e-4, est_noise_every=50,
                                  injections=((tau, inj),)))
    hit = [np.any((res.events_t[i, :res.events_n[i]] >= tau)
                  & (res.events_t[i, :res.events_n[i]] <= tau + 50)) for i in range(200)]
    assert np.mean(hit) >= 0.95


def test_false_positive_rate():
    spec = three_qubit_spec(omega=0.1)
    res = run_ensemble(build_model(spec), NoNoise(), 1000, 8, RunOptions(dt=0.01, rec_every=5))
    false = 0
    for i in range(1000):
        for j in range(min(res.events_n[i], res.events_t.shape[1])):
            k = max(np.searchsorted(res.t_rec, res.events_t[i, j]) - 1, 0)
            if res.events_syn[i, j] != 0 and res.code_pop[i, k] > 0.5:
                false += 1
                break
    assert false <= 10
