from dataclasses import replace

import numpy as np
import pytest

from src.tpe_evo.evosolve import (
    SourceTerm,
    a_skew_defect,
    build_system,
    bump_profile,
    check_causality,
    check_norm_bound,
    constraint_residual,
    freq_solve,
    gaussian_pulse,
    integrator_toy,
    l2_difference,
    project_constraints,
    simulate,
    system_energy,
)
from src.tpe_evo.impedance import BoundaryTriple
from src.tpe_evo.linspace import LinOp
from src.tpe_evo.material import SLOT, SLOTS, CertifySearch, certify, decoupled_unit, material_from_coefficients
from src.tpe_evo.mesh import build_complex
from src.tpe_evo.utils import PreconditionError, ShapeError

A_PATTERN = {
    ("T", "v"), ("v", "T"), ("tau_T", "v"), ("v", "tau_T"),
    ("H", "E"), ("E", "H"), ("tau_H", "E"), ("E", "tau_H"),
    ("q", "theta"), ("theta", "q"), ("tau_q", "theta"), ("theta", "tau_q"),
}

COUPLED = {
    "rho": 1.2, "elasticity": {"lame_lambda": 1.0, "lame_mu": 1.0}, "eps": 1.0, "mu": 1.5,
    "sigma": 0.5, "theta0": 1.0, "alpha_m": 1.0, "kappa0_inv": 1.0, "kappa1": 1.0,
    "e": 0.2, "lambda": 0.1, "p": 0.1,
}


@pytest.fixture(scope="module")
def unit2(cube2):
    return build_system(cube2, decoupled_unit(cube2.spaces), mode="trivial")


@pytest.fixture(scope="module")
def coupled2(cube2):
    return build_system(cube2, material_from_coefficients(cube2.spaces, COUPLED), mode="mesh", a_scale=0.5)


def _pulse(system, slot, dt, n_steps, onset, width=0.05):
    cx = system.complex
    components = system.layout.space(slot).dim // cx.n_nodes
    return gaussian_pulse(system.layout, slot, dt, n_steps, onset, width, profile=bump_profile(cx, components))


@pytest.mark.parametrize("mode", ["synthetic", "mesh", "trivial"])
def test_a_is_skew(cube2, mode):
    system = build_system(cube2, decoupled_unit(cube2.spaces), mode=mode, seed=3)
    assert a_skew_defect(system) <= 1e-12


@pytest.mark.parametrize(
    "cells",
    [(3, 3, 3), (4, 4, 4), pytest.param((6, 6, 6), marks=pytest.mark.slow)],
)
def test_a_is_skew_on_finer_grids(cells):
    cx = build_complex(cells)
    system = build_system(cx, material_from_coefficients(cx.spaces, COUPLED), mode="mesh", a_scale=0.5)
    assert a_skew_defect(system) <= 1e-12


def test_a_has_the_block_pattern_of_the_three_columns(unit2):
    present = {
        (SLOTS[i], SLOTS[j])
        for i in range(len(SLOTS))
        for j in range(len(SLOTS))
        if unit2.A.is_present(i, j)
    }
    assert present == A_PATTERN


def test_velocity_row_is_minus_sdiv_on_interior_stress(cube3, rng):
    system = build_system(cube3, decoupled_unit(cube3.spaces), mode="trivial")
    stress = rng.standard_normal((6, cube3.n_nodes))
    stress[:, cube3.boundary_nodes()] = 0.0
    stress = stress.ravel()
    parts = [np.zeros(dim) for dim in system.layout.dims]
    parts[SLOT["T"]] = stress
    row = system.A.apply(parts)[SLOT["v"]]
    expected = -cube3.ops["sdiv"].apply(stress)
    np.testing.assert_allclose(row, expected, atol=1e-10 * np.max(np.abs(expected)))


def test_integrator_ramp_in_time():
    toy = integrator_toy()
    n_steps, dt = 200, 1.0 / 200
    sources = SourceTerm(dt, n_steps, {"v": np.ones((n_steps + 1, 1))})
    series = simulate(toy, sources, override_certificate=True)
    np.testing.assert_allclose(series.slot("v")[:, 0], series.times, atol=1e-12)


def test_integrator_ramp_in_frequency():
    toy = integrator_toy()
    n_steps, dt = 200, 1.0 / 200
    sources = SourceTerm(dt, n_steps, {"v": np.ones((n_steps + 1, 1))})
    series = freq_solve(toy, sources, nu=1.0, pad_factor=16, workers=1, override_certificate=True)
    assert np.max(np.abs(series.slot("v")[:, 0] - series.times)) <= 10 * dt
    assert not series.wrap_warning


def test_short_padding_raises_the_wrap_warning():
    toy = integrator_toy()
    n_steps, dt = 200, 1.0 / 200
    sources = SourceTerm(dt, n_steps, {"v": np.ones((n_steps + 1, 1))})
    series = freq_solve(toy, sources, nu=1.0, pad_factor=4, workers=2, override_certificate=True)
    assert series.wrap_warning
    assert series.wrap_energy > 1e-8
    with pytest.raises(PreconditionError):
        freq_solve(toy, sources, nu=1.0, pad_factor=2, override_certificate=True)


def test_zero_sources_give_zero_states(unit2):
    sources = SourceTerm.zero(0.01, 20)
    assert np.max(np.abs(simulate(unit2, sources, override_certificate=True).states)) == 0.0
    series = freq_solve(unit2, sources, nu=1.0, workers=1, override_certificate=True)
    assert np.max(np.abs(series.states)) == 0.0
    assert series.solver == "freq"


def test_time_stepping_is_causal(cube3):
    system = build_system(cube3, material_from_coefficients(cube3.spaces, COUPLED), mode="mesh")
    sources = _pulse(system, "E", 0.005, 200, onset=50)
    series = simulate(system, sources, override_certificate=True)
    assert check_causality(series) <= 1e-13
    assert np.max(series.state_norms()) > 0.0


def test_frequency_solve_is_causal_to_tolerance(coupled2):
    sources = _pulse(coupled2, "E", 0.005, 100, onset=40)
    series = freq_solve(coupled2, sources, nu=4.0, pad_factor=8, override_certificate=True)
    peak = float(np.max(series.state_norms()))
    assert peak > 0.0
    assert check_causality(series) <= 1e-4 * peak
    assert not series.wrap_warning


def test_energy_decays_once_sources_stop(cube2):
    rng = np.random.default_rng(77)
    for _ in range(20):
        coeffs = dict(COUPLED)
        coeffs.update({
            "rho": rng.uniform(0.5, 2.0), "eps": rng.uniform(1.0, 2.0), "mu": rng.uniform(1.0, 2.0),
            "sigma": rng.uniform(0.0, 1.0), "kappa0_inv": rng.uniform(0.0, 1.0), "kappa1": rng.uniform(0.5, 1.5),
        })
        material = material_from_coefficients(cube2.spaces, coeffs)
        base = build_system(cube2, material, mode="synthetic", seed=int(rng.integers(1000)))
        g = base.boundary.G_space
        r = rng.standard_normal((g.dim, g.dim))
        triple = replace(base.boundary, alpha_b=LinOp(g, g, 0.3 * r @ r.T / g.dim))
        system = build_system(cube2, material, triple=triple)
        n_steps, dt, onset, stop = 80, 0.01, 5, 25
        values = np.zeros((n_steps + 1, system.layout.space("E").dim))
        shape = bump_profile(cube2, 3)
        for n in range(onset, stop):
            values[n] = np.sin(np.pi * (n - onset) / (stop - onset)) * shape
        series = simulate(system, SourceTerm(dt, n_steps, {"E": values}, onset), override_certificate=True)
        energy = system_energy(series, system)
        assert energy[stop] > 0.0
        assert np.all(np.diff(energy[stop:]) <= 1e-12 * energy[stop])


def test_norm_bound_slack(unit2):
    certificate = certify(unit2.material, unit2.boundary, CertifySearch(fixed_nu=0.5))
    assert certificate.c == pytest.approx(0.5, abs=1e-12)
    sources = _pulse(unit2, "v", 0.01, 100, onset=25)
    series = simulate(unit2, sources, nu=0.5, certificate=certificate)
    assert check_norm_bound(series, sources, certificate.c) >= -0.05
    assert check_norm_bound(series, SourceTerm.zero(0.01, 100), certificate.c) == np.inf


def test_norm_bound_slack_settles_under_refinement(unit2):
    certificate = certify(unit2.material, unit2.boundary, CertifySearch(fixed_nu=0.5))
    horizon = 1.0
    slacks = []
    for n_steps in (64, 128, 256, 512):
        dt = horizon / n_steps
        sources = _pulse(unit2, "v", dt, n_steps, onset=n_steps // 4)
        series = simulate(unit2, sources, nu=0.5, certificate=certificate)
        slacks.append(check_norm_bound(series, sources, certificate.c))
    assert all(later <= earlier + 1e-9 for earlier, later in zip(slacks, slacks[1:]))
    assert slacks[-1] >= -0.05


def test_solvers_refuse_without_a_certificate(unit2):
    sources = SourceTerm.zero(0.01, 5)
    with pytest.raises(PreconditionError):
        simulate(unit2, sources)
    certificate = certify(unit2.material, unit2.boundary, CertifySearch(fixed_nu=0.5))
    with pytest.raises(PreconditionError):
        simulate(unit2, sources, nu=0.25, certificate=certificate)
    with pytest.raises(PreconditionError):
        freq_solve(unit2, sources, nu=0.25, certificate=certificate)
    simulate(unit2, sources, nu=0.5, certificate=certificate)


def test_source_validation(unit2):
    layout = unit2.layout
    with pytest.raises(PreconditionError):
        SourceTerm(0.0, 4, {})
    with pytest.raises(ShapeError):
        SourceTerm(0.1, 4, {"tau_T": np.zeros((5, layout.space("tau_T").dim))})
    with pytest.raises(ShapeError):
        SourceTerm(0.1, 4, {"v": np.zeros((4, layout.space("v").dim))})
    early = np.zeros((5, layout.space("v").dim))
    early[1] = 1.0
    with pytest.raises(PreconditionError):
        SourceTerm(0.1, 4, {"v": early}, onset=3)
    wrong_width = SourceTerm(0.1, 4, {"v": np.zeros((5, 2))})
    with pytest.raises(ShapeError):
        wrong_width.dense(layout)
    with pytest.raises(ShapeError):
        simulate(unit2, SourceTerm.zero(0.1, 4), dt=0.05, override_certificate=True)


def test_gaussian_pulse_switches_on_at_onset(unit2):
    dt, onset, width = 0.01, 10, 0.05
    pulse = gaussian_pulse(unit2.layout, "H", dt, 60, onset, width, amplitude=2.0)
    envelope = pulse.samples["H"][:, 0]
    assert np.all(envelope[:onset] == 0.0)
    assert envelope[onset] > 0.0
    peak = int(np.argmax(envelope))
    assert peak * dt == pytest.approx(onset * dt + 3 * width)
    assert envelope[peak] == pytest.approx(2.0)


def test_constraint_residual_and_projection(coupled2):
    sources = _pulse(coupled2, "v", 0.01, 30, onset=5)
    series = simulate(coupled2, sources, override_certificate=True)
    residual = constraint_residual(series, coupled2)
    assert set(residual) == {"tau_T", "tau_H", "tau_q"}
    assert all(r.shape == (series.n_samples,) for r in residual.values())
    projected = project_constraints(series, coupled2)
    np.testing.assert_array_equal(projected.slot("v"), series.slot("v"))
    for values in constraint_residual(projected, coupled2).values():
        assert np.max(values) <= 1e-12 * max(1.0, float(np.max(series.state_norms())))


def test_toy_has_no_constraints():
    toy = integrator_toy()
    series = simulate(toy, SourceTerm.zero(0.1, 3), override_certificate=True)
    assert all(np.all(r == 0.0) for r in constraint_residual(series, toy).values())
    assert project_constraints(series, toy) is series


def test_l2_difference_of_identical_runs(unit2):
    sources = _pulse(unit2, "theta", 0.01, 20, onset=2)
    a = simulate(unit2, sources, override_certificate=True)
    b = simulate(unit2, sources, override_certificate=True)
    assert l2_difference(a, b) == 0.0
    with pytest.raises(ShapeError):
        l2_difference(a, simulate(unit2, SourceTerm.zero(0.01, 10), override_certificate=True))


def test_synthetic_triple_dims_must_match(cube2):
    wrong = BoundaryTriple.synthetic((1, 1, 1), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        build_system(cube2, decoupled_unit(cube2.spaces), triple=wrong)
    with pytest.raises(ShapeError):
        build_system(cube2, decoupled_unit(cube2.spaces), mode="random")


@pytest.mark.slow
@pytest.mark.parametrize("cells, steps", [((2, 2, 2), (128, 256)), ((4, 4, 4), (256, 512))])
def test_time_stepping_converges_to_the_frequency_solution(cells, steps):
    cx = build_complex(cells)
    system = build_system(cx, decoupled_unit(cx.spaces), mode="trivial")
    errors = []
    for n_steps in steps:
        dt = 1.0 / n_steps
        sources = _pulse(system, "v", dt, n_steps, onset=n_steps // 8, width=0.1)
        reference = freq_solve(system, sources, nu=6.0, pad_factor=8, override_certificate=True)
        stepped = simulate(system, sources, nu=6.0, override_certificate=True)
        errors.append(l2_difference(stepped, reference))
    assert 1.6 <= errors[0] / errors[1] <= 2.4
