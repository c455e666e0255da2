from math import comb

import numpy as np
import pytest

from conftest import (cd_lasso, dense_op, kkt_violation, lasso_objective,
                      random_spd)
from sampletbp import (BlockOperator, CompressedOperator, KernelSpec,
                       PointCloud, SolverConfig, build_cluster_tree,
                       build_samplet_basis, compress, fista, ir_mrssn, mrssn,
                       ridge_cg, soft_shrinkage, solve_multi_kernel)
from sampletbp.solver import SolverError


MATERN = KernelSpec("matern32", length=0.25)


def kernel_setup(rng, n, q=1, d=2, tau=0.0):
    cloud = PointCloud(rng.uniform(-0.5, 0.5, (n, d)))
    tree = build_cluster_tree(cloud, 2 * comb(q + d, d))
    basis = build_samplet_basis(tree, cloud, q)
    op = compress(basis, MATERN, cloud, tau=tau)
    return cloud, basis, op


def easy_lasso(seed):
    """Well-conditioned random instance on which every solver converges."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 65))
    A = random_spd(n, rng, ridge=1.0)
    h = rng.standard_normal(n)
    w = 0.1 * np.abs(A.T @ h).max()
    return A, h, np.full(n, w)


class TestSoftShrinkage:
    def test_basic(self):
        out = soft_shrinkage([2.0, -3.0, 0.5], [1.0, 1.0, 1.0])
        assert np.array_equal(out, [1.0, -2.0, 0.0])

    def test_zero_weight_identity(self, rng):
        v = rng.standard_normal(10)
        assert np.array_equal(soft_shrinkage(v, np.zeros(10)), v)

    def test_boundary_maps_to_zero(self):
        assert soft_shrinkage([1.5, -1.5], [1.5, 1.5]).tolist() == [0.0, 0.0]

    def test_negative_weight_rejected(self):
        with pytest.raises(SolverError):
            soft_shrinkage([1.0], [-0.1])


class TestRidgeCG:
    def test_identity_single_iteration(self, rng):
        h = rng.standard_normal(12)
        rep = ridge_cg(dense_op(np.eye(12)), h, lam=0.0)
        assert rep.iterations == 1
        assert np.abs(rep.beta - h).max() <= 1e-12

    def test_matern_matches_dense_solve(self, rng):
        n = 256
        cloud, basis, op = kernel_setup(rng, n)
        h = basis.forward(rng.standard_normal(n))
        lam = 2e-5 * n
        rep = ridge_cg(op, h, lam, tol=1e-10, diagonal_scaling=True,
                       basis=basis)
        ref = np.linalg.solve(op.to_dense() + lam * np.eye(n), h)
        assert np.linalg.norm(rep.beta - ref) / np.linalg.norm(ref) <= 1e-6
        assert np.abs(rep.alpha - basis.inverse(rep.beta)).max() <= 1e-12

    def test_large_lambda_asymptotics(self, rng):
        A = random_spd(20, rng)
        h = rng.standard_normal(20)
        lam = 1e8
        rep = ridge_cg(dense_op(A), h, lam, tol=1e-12)
        assert np.linalg.norm(rep.beta - h / lam) / np.linalg.norm(h / lam) \
            <= 1e-6

    def test_negative_curvature_reported(self, rng):
        with pytest.raises(SolverError, match="lam is too small"):
            ridge_cg(dense_op(-np.eye(5)), np.ones(5), lam=0.0)

    def test_transform_invariance(self, rng):
        # untruncated: the samplet-coordinate solution is T times the
        # single-scale solution
        n = 128
        cloud, basis, op_sig = kernel_setup(rng, n)
        K = op_sig.to_dense()  # samplet coordinates
        h = rng.standard_normal(n)
        lam = 2e-5 * n
        from sampletbp.kernel import assemble_dense
        op_ss = dense_op(assemble_dense(MATERN, cloud))
        rep_ss = ridge_cg(op_ss, h, lam, tol=1e-12)
        rep_sig = ridge_cg(op_sig, basis.forward(h), lam, tol=1e-12)
        assert np.abs(rep_sig.beta - basis.forward(rep_ss.beta)).max() <= 1e-8


class TestFista:
    def test_orthonormal_closed_form(self):
        rep = fista(dense_op(np.eye(2)), [2.0, 0.0], [1.0, 1.0],
                    config=SolverConfig(tol=1e-12), mode="mr")
        assert np.abs(rep.beta - [1.0, 0.0]).max() <= 1e-10

    def test_zero_weights_interpolate(self, rng):
        A = random_spd(24, rng, ridge=1.0)
        h = rng.standard_normal(24)
        rep = fista(dense_op(A), h, 0.0, config=SolverConfig(tol=1e-10),
                    mode="mr")
        ref = np.linalg.solve(A, h)
        assert np.linalg.norm(rep.beta - ref) / np.linalg.norm(ref) <= 1e-6

    def test_matches_cd_oracle(self):
        A, h, w = easy_lasso(7)
        rep = fista(dense_op(A), h, w, config=SolverConfig(tol=1e-10),
                    mode="mr")
        b = cd_lasso(A, h, w)
        assert abs(rep.objective - lasso_objective(A, h, b, w)) <= 1e-8

    def test_single_scale_mode(self, rng):
        # with the operator equal to the identity in samplet coordinates the
        # single-scale design matrix is T itself, which is orthogonal, so the
        # solution has the closed form SS_w(T^T h)
        n = 64
        cloud, basis, _ = kernel_setup(rng, n)
        op = dense_op(np.eye(n))
        h = basis.forward(rng.standard_normal(n))
        w = 0.3
        rep = fista(op, h, w, config=SolverConfig(tol=1e-10), basis=basis,
                    mode="single")
        assert rep.method == "fista"
        ref = soft_shrinkage(basis.inverse(h), np.full(n, w))
        assert np.abs(rep.alpha - ref).max() <= 1e-8
        assert np.abs(rep.beta - basis.forward(rep.alpha)).max() <= 1e-12

    def test_objective_never_worse_than_start(self):
        A, h, w = easy_lasso(3)
        op = dense_op(A)
        rep = fista(op, h, w, config=SolverConfig(tol=1e-8), mode="mr")
        start = lasso_objective(A, h, np.zeros(len(h)), w)
        assert rep.objective <= start

    def test_unknown_mode(self):
        with pytest.raises(SolverError):
            fista(dense_op(np.eye(2)), [1.0, 1.0], 0.0, mode="bogus")


class TestMrssn:
    def test_scalar_closed_form(self):
        rep = mrssn(dense_op([[1.0]]), [2.0], [1.0], gamma=0.5, tol=1e-12)
        assert rep.iterations <= 2
        assert abs(rep.beta[0] - 1.0) <= 1e-12

    def test_zero_weights_full_active_set(self, rng):
        A = random_spd(16, rng, ridge=1.0)
        h = rng.standard_normal(16)
        rep = mrssn(dense_op(A), h, 0.0, gamma=1.0, tol=1e-10)
        assert rep.final_active_size == 16
        ref = np.linalg.solve(A, h)
        assert np.linalg.norm(rep.beta - ref) / np.linalg.norm(ref) <= 1e-8

    def test_matches_cd_oracle(self):
        for seed in (0, 11, 29):
            A, h, w = easy_lasso(seed)
            rep = mrssn(dense_op(A), h, w, gamma="auto", tol=1e-10)
            b = cd_lasso(A, h, w)
            assert abs(rep.objective - lasso_objective(A, h, b, w)) <= 1e-8
            assert kkt_violation(A, h, rep.beta, w) <= 1e-8

    def test_active_set_cap(self, rng):
        A = random_spd(30, rng, ridge=1.0)
        h = rng.standard_normal(30)
        with pytest.raises(SolverError, match="cap"):
            mrssn(dense_op(A), h, 0.0, gamma=1.0,
                  config=SolverConfig(active_set_cap=5))

    def test_fixed_point_for_scaled_gammas(self):
        A, h, w = easy_lasso(5)
        op = dense_op(A)
        rep = mrssn(op, h, w, gamma="auto", tol=1e-10)
        gamma_star = rep.extras["gamma"]
        for g in (0.1 * gamma_star, gamma_star, 10 * gamma_star):
            u = rep.beta + g * op.matvec_transpose(h - op.matvec(rep.beta))
            r = rep.beta - soft_shrinkage(u, g * w)
            assert np.abs(r).max() <= 9e-7


class TestIrMrssn:
    def test_zero_outer_steps_equals_plain(self):
        A, h, w = easy_lasso(13)
        op = dense_op(A)
        rep_ir = ir_mrssn(op, h, w, config=SolverConfig(tol=1e-10,
                                                        outer_steps=0))
        rep_plain = mrssn(op, h, w, gamma="auto", tol=1e-10)
        assert np.array_equal(rep_ir.beta, rep_plain.beta)

    def test_tiny_mu0_continuation_noop(self):
        A, h, w = easy_lasso(17)
        op = dense_op(A)
        rep_ir = ir_mrssn(op, h, w, config=SolverConfig(
            tol=1e-10, mu0=1.0 + 1e-9, outer_steps=1))
        rep_plain = mrssn(op, h, w, gamma="auto", tol=1e-10)
        assert np.abs(rep_ir.beta - rep_plain.beta).max() <= 1e-7

    def test_sparser_than_fista_on_benchmark(self):
        from sampletbp.bench import BenchmarkCase, generate
        case = BenchmarkCase(generator="spss", n=1000, seed=1)
        data = generate(case)
        op = compress(data.basis, case.kernel, data.cloud, tau=1e-4)
        h = data.basis.forward(data.noisy)
        w = 2e-5
        cfg = SolverConfig(tol=9e-7, max_iter=3000)
        rep_ir = ir_mrssn(op, h, w, config=cfg)
        rep_f = fista(op, h, w, config=cfg, mode="mr")
        assert rep_ir.extras["converged"]
        assert rep_ir.final_active_size < rep_f.final_active_size

    def test_objective_agrees_with_fista(self, rng):
        # well-conditioned instance where the infinity-norm stopping rule is
        # meaningful for both methods
        n = 256
        A = random_spd(n, rng, ridge=1.0)
        h = rng.standard_normal(n)
        w = 0.1 * np.abs(A.T @ h).max()
        op = dense_op(A)
        rep_ir = ir_mrssn(op, h, w, config=SolverConfig(tol=1e-9))
        rep_f = fista(op, h, w, config=SolverConfig(tol=1e-9,
                                                    max_iter=100000),
                      mode="mr")
        assert abs(rep_ir.objective - rep_f.objective) <= 1e-6

    def test_error_context(self, rng):
        A = random_spd(30, rng, ridge=1.0)
        h = rng.standard_normal(30)
        with pytest.raises(SolverError, match="outer step"):
            ir_mrssn(dense_op(A), h, 0.0, config=SolverConfig(
                active_set_cap=5, outer_steps=1))


class TestGradient:
    def test_finite_difference(self, rng):
        n = 64
        A = random_spd(n, rng)
        op = dense_op(A)
        h = rng.standard_normal(n)
        beta = rng.standard_normal(n)
        g = op.matvec_transpose(op.matvec(beta) - h)

        def f(b):
            r = h - op.matvec(b)
            return 0.5 * float(r @ r)

        eps = 1e-6
        for k in rng.choice(n, 8, replace=False):
            e = np.zeros(n)
            e[k] = eps
            fd = (f(beta + e) - f(beta - e)) / (2 * eps)
            assert abs(fd - g[k]) <= 1e-6 * max(1.0, abs(g[k]))


class TestMultiKernel:
    def test_single_block_path(self):
        A, h, w = easy_lasso(23)
        blk = BlockOperator(blocks=(dense_op(A),))
        rep = solve_multi_kernel(blk, h, w, config=SolverConfig(tol=1e-10),
                                 method="mrfista")
        ref = fista(dense_op(A), h, w, config=SolverConfig(tol=1e-10),
                    mode="mr")
        assert np.array_equal(rep.beta, ref.beta)

    def test_identical_blocks_objective(self):
        A, h, w = easy_lasso(31)
        n = len(h)
        blk = BlockOperator(blocks=(dense_op(A), dense_op(A)))
        rep = solve_multi_kernel(blk, h, np.concatenate([w, w]),
                                 config=SolverConfig(tol=1e-10),
                                 method="mrfista")
        single = fista(dense_op(A), h, w, config=SolverConfig(tol=1e-10),
                       mode="mr")
        assert abs(rep.objective - single.objective) <= 1e-8

    def test_zero_block_gets_no_support(self, rng):
        n = 16
        blk = BlockOperator(blocks=(
            dense_op(np.eye(n)),
            CompressedOperator.from_dense(np.zeros((n, n)), 0.0)))
        h = rng.standard_normal(n)
        rep = solve_multi_kernel(blk, h, 0.05, config=SolverConfig(tol=1e-10),
                                 method="ir_mrssn")
        nnz1, nnz2 = rep.extras["block_nnz"]
        assert nnz1 > 0 and nnz2 == 0


class TestReport:
    def test_alpha_matches_inverse_transform(self, rng):
        n = 64
        cloud, basis, op = kernel_setup(rng, n)
        h = basis.forward(rng.standard_normal(n))
        rep = ir_mrssn(op, h, 2e-3, config=SolverConfig(tol=1e-8),
                       basis=basis)
        assert np.abs(rep.alpha - basis.inverse(rep.beta)).max() <= 1e-12
        assert rep.final_active_size == int(np.count_nonzero(rep.beta))

    def test_json_round_trip_and_timing_toggle(self):
        import json
        A, h, w = easy_lasso(2)
        rep = mrssn(dense_op(A), h, w, gamma="auto", tol=1e-8)
        full = json.loads(rep.to_json())
        assert "wall_time" in full and "beta" in full
        bare = json.loads(rep.to_json(include_coefficients=False,
                                      include_timings=False))
        assert "wall_time" not in bare and "beta" not in bare

    def test_coefficients_csv(self, tmp_path):
        A, h, w = easy_lasso(4)
        rep = mrssn(dense_op(A), h, w, gamma="auto", tol=1e-8)
        path = tmp_path / "coeff.csv"
        rep.coefficients_csv(path)
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        assert np.array_equal(table[:, 1], rep.beta)
        assert np.array_equal(table[:, 2], rep.alpha)
