import numpy as np
import pytest

from conftest import five_qubit_spec, three_qubit_spec
from holosteer.engine import (EngineError, RunOptions, _trajectory_rng, build_model, grid,
                              run_batch, run_ensemble)
from holosteer.geometry import gate_unitary
from holosteer.noise import BitFlipJumps, NoNoise, StaticNoise, WhiteNoise
from holosteer.pauli import PauliOperator as P
from holosteer.sde import run_trajectory


def test_grid_snaps_step():
    steps, dt = grid(2 * np.pi, 0.01)
    assert steps == 628 and steps * dt == pytest.approx(2 * np.pi)


def test_model_rejects_non_z_generators(spec3):
    from holosteer.geometry import GateSpec
    from holosteer.pauli import StabilizerCode
    code = StabilizerCode(3, 1, 1, ("XXI", "IXX"), ("ZZZ", "XXX"), ("III",))
    spec = GateSpec(code, P.from_string("XXX"), P.from_string("ZIZ"), np.pi / 6, 0.1)
    with pytest.raises(EngineError):
        build_model(spec)


@pytest.mark.parametrize("noise", [NoNoise(), StaticNoise(0.05)])
def test_engine_matches_dense_reference(noise):
    """Same random stream, dense Euler-Maruyama versus the rotating-frame Kraus scheme."""
    spec = three_qubit_spec(omega=0.5)
    res = run_batch(build_model(spec), noise, np.arange(2), 11,
                    RunOptions(dt=1e-3, estimator=False, chunk=10 ** 7))
    for i in range(2):
        ref = run_trajectory(spec, noise, 1e-3, _trajectory_rng(11, i))
        assert abs(np.vdot(ref.psi, res.final_psi[i])) ** 2 >= 0.998
        ref_in = np.vdot(ref.psi, spec.P0 @ ref.psi).real > 0.5
        assert ref_in == (res.code_pop[i, -1] > 0.5)


def test_noiseless_slow_gate(spec5):
    spec = five_qubit_spec(omega=0.01)
    res = run_ensemble(build_model(spec), NoNoise(), 20, 0,
                       RunOptions(dt=0.05, estimator=False, rec_every=100))
    kept = res.code_pop[:, -1] > 0.5
    assert kept.mean() > 0.7
    assert res.fidelity[kept, -1].min() > 0.99
    target = gate_unitary(spec) @ (spec.L0 @ np.array([1, 1]) / np.sqrt(2))
    ov = np.abs(res.final_psi[kept] @ target.conj()) ** 2
    assert ov.min() > 0.99
    assert res.fidelity.shape[1] == len(res.t_rec) and res.t_rec[-1] == pytest.approx(spec.T)


def test_threads_and_batches_do_not_change_results():
    spec = five_qubit_spec(omega=0.5)
    model = build_model(spec)
    base = dict(dt=0.01, rec_every=50)
    a = run_ensemble(model, BitFlipJumps(1e-3), 12, 3, RunOptions(batch=12, threads=1, **base))
    b = run_ensemble(model, BitFlipJumps(1e-3), 12, 3, RunOptions(batch=5, threads=2, **base))
    assert np.array_equal(a.final_psi, b.final_psi)
    assert np.array_equal(a.fidelity, b.fidelity)
    assert np.array_equal(a.events_t, b.events_t)


def test_prefix_stability():
    spec = three_qubit_spec(omega=0.5)
    model = build_model(spec)
    opts = RunOptions(dt=0.01, estimator=False)
    a = run_ensemble(model, WhiteNoise(1e-3), 4, 9, opts)
    b = run_ensemble(model, WhiteNoise(1e-3), 8, 9, opts)
    assert np.array_equal(a.final_psi, b.final_psi[:4])


def test_injection_leaves_code_space():
    spec = three_qubit_spec(omega=0.5)
    inj = P.from_string("IXI")
    res = run_ensemble(build_model(spec, extra_ops=[inj]), NoNoise(), 3, 0,
                       RunOptions(dt=0.01, estimator=False, injections=((spec.T / 3, inj),)))
    assert np.all(res.code_pop[:, -1] < 1e-6)
    assert all(r[0][1] == "IXI" and r[0][0] == pytest.approx(spec.T / 3, abs=0.01)
               for r in res.injected)
    with pytest.raises(EngineError):
        run_ensemble(build_model(spec), NoNoise(), 1, 0,
                     RunOptions(dt=0.01, estimator=False, injections=((1.0, inj),)))


def test_estimator_records_expectations():
    spec = five_qubit_spec(omega=0.5)
    res = run_ensemble(build_model(spec), NoNoise(), 2, 1,
                       RunOptions(dt=0.01, rec_every=10, record_estimator=True))
    assert res.est_expect.shape == (2, len(res.t_rec), 4)
    assert np.all(np.abs(res.est_expect) <= 1 + 1e-9)
    assert not res.health.any()
