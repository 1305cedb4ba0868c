import numpy as np
import pytest
from numpy.testing import assert_allclose

from drsplit.analysis import (
    DDR_GLOBAL_GAMMA_MAX,
    SUDOKU_SDR_RATE,
    InsufficientDataError,
    auto_tail_fraction,
    build_sudoku_linearization,
    ddr_affine_rate,
    ddr_rate_block,
    ddr_rate_eigenvalues,
    detect_finite_termination,
    fit_linear_rate,
    friedrichs_angle,
    is_semi_simple,
    numerical_rank,
    principal_angles,
    spectral_radius,
    sudoku_product_projectors,
    sudoku_subspace_bases,
    theoretical_rate,
)
from drsplit.geometry import AffineSubspace
from drsplit.puzzles import bundled_sudoku, queens_problem, sudoku_problem
from drsplit.puzzles import QueensInstance
from drsplit.splitting import IterationTrace, StopPolicy, product_step, run

RNG = np.random.default_rng(2024)


def synthetic_trace(residuals):
    """Trace stub carrying a prescribed z-residual sequence."""
    r = np.asarray(residuals, dtype=float)
    tr = IterationTrace(n_blocks=1)
    for v in r:
        tr.append(z_step=v, objective=np.nan)
    tr.inject_residuals(z_res=r)
    return tr


class TestRateFitting:
    @pytest.mark.parametrize("eta", [0.1, 0.4472135954999579, 0.86, 0.99])
    def test_recovers_synthetic_geometric_decay(self, eta):
        kmax = int(np.ceil(-13.0 / np.log10(eta))) + 20
        r = 3.0 * eta ** np.arange(kmax)
        est = fit_linear_rate(synthetic_trace(r), "z_res", tail_fraction=0.5)
        assert abs(est.slope - eta) < 1e-6
        assert est.r_squared > 1.0 - 1e-9

    def test_report_fields(self):
        r = 0.5 ** np.arange(60)
        est = fit_linear_rate(synthetic_trace(r), "z_res", 0.5)
        k0, k1 = est.window
        assert 0 <= k0 < k1 < 60
        assert k1 <= 54                   # last five excluded
        assert est.n_points >= 10

    def test_floor_residuals_excluded(self):
        # decay bottoms out at 1e-16; those points must not pollute the fit
        r = np.maximum(0.5 ** np.arange(120), 1e-16)
        est = fit_linear_rate(synthetic_trace(r), "z_res", 0.9)
        assert abs(est.slope - 0.5) < 1e-3

    def test_short_trace_rejected(self):
        with pytest.raises(InsufficientDataError):
            fit_linear_rate(synthetic_trace(0.5 ** np.arange(20)), "z_res", 0.5)

    def test_too_few_usable_points_rejected(self):
        r = np.full(100, 1e-15)           # everything below the floor
        with pytest.raises(InsufficientDataError):
            fit_linear_rate(synthetic_trace(r), "z_res", 0.5)

    def test_tail_fraction_validated(self):
        r = 0.5 ** np.arange(60)
        for tf in (0.0, 1.5, -0.1):
            with pytest.raises(ValueError):
                fit_linear_rate(synthetic_trace(r), "z_res", tf)

    def test_auto_tail_fraction_skips_the_elbow(self):
        # flat plateau followed by clean decay
        r = np.concatenate([np.full(80, 2.0), 2.0 * 0.5 ** np.arange(60)])
        tf = auto_tail_fraction(synthetic_trace(r), "z_res")
        est = fit_linear_rate(synthetic_trace(r), "z_res", tf)
        assert abs(est.slope - 0.5) < 1e-6

    def test_sdr_sudoku_run_hits_theory_rate(self):
        prob = sudoku_problem(bundled_sudoku("4x4"))
        res = run(product_step(prob.projections, "sdr"),
                  prob.initial_state(0), StopPolicy(stop_on_feasible=False),
                  feasible=prob.feasible, keep_iterates=True)
        res.trace.set_reference()
        tf = auto_tail_fraction(res.trace, "z_res")
        est = fit_linear_rate(res.trace, "z_res", tf)
        assert abs(est.slope - SUDOKU_SDR_RATE) < 0.02

    def test_ddr_sudoku_run_hits_theory_rate(self):
        prob = sudoku_problem(bundled_sudoku("9x9-37"))
        res = run(product_step(prob.projections, "ddr", gamma=0.2),
                  prob.initial_state(0), StopPolicy(stop_on_feasible=False),
                  feasible=prob.feasible, keep_iterates=True)
        res.trace.set_reference()
        tf = auto_tail_fraction(res.trace, "z_res")
        est = fit_linear_rate(res.trace, "z_res", tf)
        lam_plus = ddr_rate_eigenvalues(0.2)[3]
        assert abs(est.slope - lam_plus) < 0.02


class TestFiniteTermination:
    def test_constant_trace_terminates_at_zero(self):
        tr = IterationTrace(n_blocks=1)
        for _ in range(50):
            tr.append(z_step=0.0, objective=np.nan)
        assert detect_finite_termination(tr, "z") == 0

    def test_last_change_index(self):
        tr = IterationTrace(n_blocks=1)
        steps = [1.0] * 10 + [0.0] * 10
        for s in steps:
            tr.append(z_step=s, objective=np.nan)
        assert detect_finite_termination(tr, "z") == 10

    def test_noisy_tail_returns_none(self):
        tr = IterationTrace(n_blocks=1)
        for s in [1.0] * 10 + [1e-3] * 10:
            tr.append(z_step=s, objective=np.nan)
        assert detect_finite_termination(tr, "z") is None

    def test_dither_below_tolerance_counts_as_frozen(self):
        tr = IterationTrace(n_blocks=1)
        for s in [1.0] * 10 + [3e-15] * 10:
            tr.append(z_step=s, objective=np.nan)
        assert detect_finite_termination(tr, "z") == 10

    def test_queens_run_freezes_z_and_all_u_blocks(self):
        prob = queens_problem(QueensInstance(8))
        for seed in range(6):
            res = run(product_step(prob.projections, "sdr"),
                      prob.initial_state(seed),
                      StopPolicy(stop_on_feasible=False),
                      feasible=prob.feasible, keep_iterates=True)
            if res.outcome != "feasible-found":
                continue
            K = detect_finite_termination(res.trace, "z")
            assert K is not None and K < res.iterations
            res.trace.set_reference()
            for i in range(4):
                Ku = detect_finite_termination(res.trace, f"u{i}")
                assert Ku is not None

    def test_sudoku_run_locks_binary_blocks_but_not_z(self):
        prob = sudoku_problem(bundled_sudoku("9x9-37"))
        # min_iter=0: stop right at the stall tolerance, otherwise the
        # floor keeps iterating past double-precision underflow and parks
        # z bitwise at the fixed point, masking the linear tail
        res = run(product_step(prob.projections, "sdr"),
                  prob.initial_state(0),
                  StopPolicy(stop_on_feasible=False, min_iter=0),
                  feasible=prob.feasible, keep_iterates=True)
        assert res.outcome == "feasible-found"
        res.trace.set_reference()
        for i in range(4):
            assert detect_finite_termination(res.trace, f"u{i}") is not None
        # the clue block and z only converge linearly
        assert detect_finite_termination(res.trace, "u4") is None
        assert detect_finite_termination(res.trace, "z") is None

    def test_unknown_block_rejected(self):
        tr = IterationTrace(n_blocks=2)
        tr.append(z_step=0.0, objective=np.nan)
        with pytest.raises(ValueError):
            detect_finite_termination(tr, "u7")


class TestPrincipalAngles:
    def test_known_plane_pair(self):
        theta = np.pi / 6.0
        a = np.eye(3)[:2]
        b = np.vstack([np.eye(3)[0],
                       [0.0, np.cos(theta), np.sin(theta)]])
        angles = principal_angles(a, b)
        assert_allclose(angles, [0.0, theta], atol=1e-12)

    def test_cross_validated_against_projector_spectrum(self):
        # cos^2 of the principal angles are eigenvalues of Pa Pb Pa
        for _ in range(20):
            n = 8
            p, q = RNG.integers(1, 4), RNG.integers(1, 5)
            A = AffineSubspace.from_span(RNG.normal(size=(p, n))).basis
            B = AffineSubspace.from_span(RNG.normal(size=(q, n))).basis
            angles = principal_angles(A, B)
            Pa, Pb = A.T @ A, B.T @ B
            ev = np.sort(np.linalg.eigvalsh(Pa @ Pb @ Pa))[::-1]
            want = np.sqrt(np.clip(ev[:len(angles)], 0.0, 1.0))
            assert_allclose(np.cos(angles), want, atol=1e-8)

    def test_angles_sorted_ascending_in_0_pi_half(self):
        A = AffineSubspace.from_span(RNG.normal(size=(3, 9))).basis
        B = AffineSubspace.from_span(RNG.normal(size=(4, 9))).basis
        angles = principal_angles(A, B)
        assert len(angles) == 3
        assert np.all(np.diff(angles) >= -1e-15)
        assert angles[0] >= 0.0 and angles[-1] <= np.pi / 2 + 1e-12

    def test_non_orthonormal_basis_rejected(self):
        with pytest.raises(ValueError):
            principal_angles(np.array([[1.0, 1.0]]), np.eye(2))

    def test_friedrichs_skips_intersection(self):
        theta = 0.3
        a = np.eye(3)[:2]
        b = np.vstack([np.eye(3)[0],
                       [0.0, np.cos(theta), np.sin(theta)]])
        assert_allclose(friedrichs_angle(a, b), theta, atol=1e-12)

    def test_friedrichs_contained_subspace_rejected(self):
        a = np.eye(3)[:1]
        b = np.eye(3)[:2]
        with pytest.raises(ValueError):
            friedrichs_angle(a, b)

    def test_sudoku_product_pair_friedrichs_cosine(self):
        inst = bundled_sudoku("4x4")
        bc, bs = sudoku_subspace_bases(inst)
        assert abs(np.cos(friedrichs_angle(bc, bs))
                   - np.sqrt(5.0) / 5.0) < 1e-10
        # every principal angle coincides for this pair
        angles = principal_angles(bc, bs)
        assert_allclose(np.cos(angles), np.sqrt(5.0) / 5.0, atol=1e-10)


class TestSpectra:
    def test_spectral_radius_diagonal(self):
        assert_allclose(spectral_radius(np.diag([0.5, -0.9, 0.1])), 0.9,
                        atol=1e-14)

    def test_spectral_radius_rotation(self):
        th = 0.7
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        assert_allclose(spectral_radius(R), 1.0, atol=1e-12)

    @pytest.mark.parametrize("gamma", [0.2, 1.0, 99.0])
    def test_damped_affine_rate_law(self, gamma):
        # rho of (gamma/(1+gamma)) (I - P_S) equals gamma/(1+gamma)
        n, k = 20, 7
        sub = AffineSubspace.from_span(RNG.normal(size=(k, n)),
                                       offset=RNG.normal(size=n))
        P = sub.projector_matrix()
        M = (gamma / (1.0 + gamma)) * (np.eye(n) - P)
        assert abs(spectral_radius(M) - ddr_affine_rate(gamma)) < 1e-12

    def test_ddr_affine_rate_values(self):
        assert_allclose(ddr_affine_rate(0.2), 1.0 / 6.0, atol=1e-15)
        assert ddr_affine_rate(np.inf) == 1.0

    def test_numerical_rank_thresholds(self):
        M = np.diag([1.0, 1e-3, 1e-14, 0.0])
        assert numerical_rank(M) == 2

    def test_is_semi_simple_jordan_block(self):
        M = np.array([[0.5, 1.0], [0.0, 0.5]])
        assert not is_semi_simple(M, 0.5)

    def test_is_semi_simple_identity(self):
        assert is_semi_simple(np.eye(4), 1.0)

    def test_rate_block_is_semi_simple_with_rank_p(self):
        gamma, p = 0.2, 48
        M = ddr_rate_block(gamma, p)
        lam = ddr_rate_eigenvalues(gamma)[3]
        A = M - lam * np.eye(2 * p)
        thr = numerical_rank(A, reference=M)
        thr2 = numerical_rank(A @ A, reference=M)
        assert thr == p and thr2 == p
        assert is_semi_simple(M, lam)

    def test_rate_block_eigenvalues(self):
        gamma, p = 0.5, 5
        ev = np.sort(np.linalg.eigvals(ddr_rate_block(gamma, p)).real)
        lam = ddr_rate_eigenvalues(gamma)
        assert_allclose(ev[:p], np.full(p, lam[1]), atol=1e-12)
        assert_allclose(ev[p:], np.full(p, lam[3]), atol=1e-12)


class TestClosedForms:
    def test_gamma_point_two_reference_values(self):
        lam = ddr_rate_eigenvalues(0.2)
        assert_allclose(lam[0], 0.0, atol=0)
        assert abs(lam[1] - 0.03870) < 1e-5
        assert abs(lam[2] - 1.0 / 6.0) < 1e-15
        assert abs(lam[3] - 0.86130) < 1e-5

    def test_gamma_one_collapses(self):
        lam = ddr_rate_eigenvalues(1.0)
        assert_allclose(lam[1], 0.2, atol=1e-14)
        assert_allclose(lam[2], 0.5, atol=1e-14)
        assert_allclose(lam[3], 0.5, atol=1e-14)

    def test_complex_regime_rejected(self):
        # closed form leaves the reals past gamma = 5/4
        with pytest.raises(ValueError):
            ddr_rate_eigenvalues(99.0)
        with pytest.raises(ValueError):
            ddr_rate_eigenvalues(-0.1)

    def test_global_damping_bound_constant(self):
        assert_allclose(DDR_GLOBAL_GAMMA_MAX, np.sqrt(1.5) - 1.0, atol=0)

    def test_theoretical_rate_map(self):
        assert theoretical_rate("sudoku", "sdr") == SUDOKU_SDR_RATE
        assert_allclose(theoretical_rate("sudoku", "ddr", 0.2),
                        ddr_rate_eigenvalues(0.2)[3])
        assert_allclose(theoretical_rate("queens", "ddr", 0.2), 1.0 / 6.0)
        assert theoretical_rate("queens", "sdr") is None
        assert theoretical_rate("circle-line", "sdr") is None
        assert theoretical_rate("sudoku", "ddr", 99.0) is None


class TestSudokuLinearization:
    def test_projectors_are_projectors(self):
        inst = bundled_sudoku("4x4")
        PC, PS = sudoku_product_projectors(inst)
        for P in (PC, PS):
            assert_allclose(P, P.T, atol=1e-14)
            assert_allclose(P @ P, P, atol=1e-12)
        assert PC.shape == (320, 320)

    def test_cross_product_singular_values(self):
        inst = bundled_sudoku("4x4")
        PC, PS = sudoku_product_projectors(inst)
        sv = np.linalg.svd(PC @ PS, compute_uv=False)
        nz = sv[sv > 1e-8]
        assert len(nz) == 64 - 16         # free cells of the clue block
        assert np.max(np.abs(nz - np.sqrt(5.0) / 5.0)) < 1e-10

    @pytest.mark.parametrize("gamma", [0.1, 0.2, 0.5, 1.0])
    def test_damped_map_spectrum_matches_closed_form(self, gamma):
        inst = bundled_sudoku("4x4")
        M = build_sudoku_linearization(inst, gamma=gamma)
        ev = np.linalg.eigvals(M)
        assert np.max(np.abs(ev.imag)) < 1e-8
        targets = np.array(ddr_rate_eigenvalues(gamma))
        dist = np.min(np.abs(ev.real[:, None] - targets[None, :]), axis=1)
        assert np.max(dist) < 1e-8
        # every theoretical eigenvalue actually appears
        for t in targets:
            assert np.min(np.abs(ev.real - t)) < 1e-8

    def test_standard_map_nonunit_modulus_is_the_rate(self):
        inst = bundled_sudoku("4x4")
        T = build_sudoku_linearization(inst)
        ev = np.linalg.eigvals(T)
        mods = np.abs(ev)
        mid = mods[(mods > 1e-8) & (mods < 1.0 - 1e-8)]
        assert len(mid) > 0
        assert np.max(np.abs(mid - np.sqrt(5.0) / 5.0)) < 1e-10

    def test_dimension_cap_enforced(self):
        inst = bundled_sudoku("9x9-37")
        with pytest.raises(ValueError):
            build_sudoku_linearization(inst, gamma=0.2)   # 3645 > 2000
        M = build_sudoku_linearization(inst, gamma=0.2, dim_cap=4000)
        assert M.shape == (3645, 3645)
