import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from ipmaxwell.analytic import CoefficientField, CurlBubble, SingularPotential
from ipmaxwell.assembly import (
    PenaltyParams,
    assemble_ah,
    assemble_pencil,
    assemble_system,
    eps_gram,
    source_matrix,
    tangential_data,
)
from ipmaxwell.fem import build_system
from ipmaxwell.geometry import generate_structured, make_mesh
from ipmaxwell.harness import l2_error
from ipmaxwell.solvers import (
    EigenConvergenceError,
    Factorization,
    SingularMatrixError,
    backward_error,
    dense_generalized_eigs,
    factorize,
    pencil_residuals,
    shift_invert_lanczos,
    solve_bvp,
    solve_eigs,
)


# ------------------------------------------------------------------ direct solves


def test_identity():
    b = np.array([1.0, -2.0, 3.5])
    assert np.array_equal(factorize(sps.identity(3, format="csc")).solve(b), b)


def test_pivoting_on_zero_diagonal():
    A = sps.csc_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(factorize(A).solve(np.array([1.0, 2.0])), [2.0, 1.0], atol=1e-15)


def test_singular_matrix_names_dof():
    A = sps.csc_matrix(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 2.0]]))
    with pytest.raises(SingularMatrixError) as info:
        Factorization(A)
    assert info.value.dof == 1
    assert "dof 1" in str(info.value)


def test_numerically_singular():
    A = sps.csc_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularMatrixError):
        Factorization(A)


def test_non_square_rejected():
    with pytest.raises(ValueError):
        Factorization(sps.csc_matrix(np.ones((2, 3))))


def test_backward_error_zero_for_exact_solution():
    A = sps.csc_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
    x = np.array([1.0, -1.0])
    assert backward_error(A, x, A @ x) == 0.0


def test_lshape_system_residual():
    pot = SingularPotential(0.535)
    fe = build_system(generate_structured("lshape_three_subdomains", 0.2), 2)
    system = assemble_system(fe, pot.coefficients(), PenaltyParams(), g_t=tangential_data(pot.gradient))
    x = factorize(system.matrix).solve(system.rhs)
    assert backward_error(system.matrix, x, system.rhs) <= 1e-10


def test_solve_bvp_zero_data():
    fe = build_system(generate_structured("lshape_three_subdomains", 0.25), 2)
    field = solve_bvp(fe, SingularPotential(0.535).coefficients(), PenaltyParams())
    assert not field.to_vector().any()


def test_solve_bvp_residual_attached():
    pot = SingularPotential(0.535)
    fe = build_system(generate_structured("lshape_three_subdomains", 0.25), 3)
    field = solve_bvp(fe, pot.coefficients(), PenaltyParams(), g_t=tangential_data(pot.gradient))
    assert field.residual <= 1e-10


@pytest.mark.xfail(
    strict=True,
    reason="structured meshes give a larger error constant than unstructured Delaunay meshes",
)
def test_lshape_error_constant_at_h_0025():
    pot = SingularPotential(0.535)
    fe = build_system(generate_structured("lshape_three_subdomains", 0.025), 2)
    field = solve_bvp(fe, pot.coefficients(), PenaltyParams(alpha=0.9), g_t=tangential_data(pot.gradient))
    _, rel = l2_error(fe, field, pot.gradient)
    assert 4.289e-2 / 2 <= rel <= 4.289e-2 * 2


# ------------------------------------------------------------------ eigenvalues


def test_diagonal_pencil():
    A = sps.diags([1.0, 2.0, 3.0, 4.0]).tocsc()
    lam, X, _ = shift_invert_lanczos(A, sps.identity(4, format="csc"), 3)
    assert np.allclose(lam, [1.0, 2.0, 3.0], rtol=1e-12)
    assert np.allclose(X.T @ X, np.eye(3), atol=1e-12)


def test_dense_oracle_on_diagonal():
    assert np.allclose(dense_generalized_eigs(np.diag([3.0, 1.0, 2.0]), np.eye(3)), [1, 2, 3])


def random_pencil(n, seed):
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    A = Q @ np.diag(rng.uniform(0.5, 20.0, n)) @ Q.T
    M = rng.standard_normal((n, n))
    B = M @ M.T + n * np.eye(n)
    return 0.5 * (A + A.T), 0.5 * (B + B.T)


def independent_dense_eigs(A, B):
    """Cholesky reduction of B and a symmetric eigensolve: a second route to the spectrum."""
    L = np.linalg.cholesky(B)
    Li = np.linalg.inv(L)
    return np.linalg.eigvalsh(Li @ A @ Li.T)


@pytest.mark.parametrize("seed", range(3))
def test_random_pencil_matches_dense(seed):
    A, B = random_pencil(50, seed)
    ref = independent_dense_eigs(A, B)
    assert np.allclose(dense_generalized_eigs(A, B), ref, rtol=1e-10)
    lam, X, _ = shift_invert_lanczos(sps.csc_matrix(A), sps.csc_matrix(B), 8, tol=1e-12)
    assert np.allclose(lam, ref[:8], rtol=1e-10, atol=0)
    assert np.allclose(X.T @ B @ X, np.eye(8), atol=1e-10)
    assert pencil_residuals(sps.csc_matrix(A), sps.csc_matrix(B), lam, X).max() <= 1e-12


def test_repeated_eigenvalues_are_all_found():
    d = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 5.0, 6.0, 7.0, 8.0, 9.0] * 4) + np.repeat(np.arange(4) * 10.0, 10)
    A = sps.diags(d).tocsc()
    lam, _, _ = shift_invert_lanczos(A, sps.identity(len(d), format="csc"), 6)
    assert np.allclose(lam, [1, 1, 1, 2, 2, 5], rtol=1e-10)


@settings(max_examples=10, deadline=None)
@given(scale=st.floats(1e-6, 1e6), seed=st.integers(0, 1000))
def test_start_vector_scaling_invariance(scale, seed):
    A, B = random_pencil(30, 7)
    v0 = np.random.default_rng(seed).standard_normal(30)
    lam1, _, _ = shift_invert_lanczos(sps.csc_matrix(A), sps.csc_matrix(B), 4, v0=v0, tol=1e-12)
    lam2, _, _ = shift_invert_lanczos(sps.csc_matrix(A), sps.csc_matrix(B), 4, v0=scale * v0, tol=1e-12)
    assert np.allclose(lam1, lam2, rtol=1e-10)


def test_lanczos_argument_errors():
    A = sps.identity(5, format="csc")
    with pytest.raises(ValueError):
        shift_invert_lanczos(A, A, 0)
    with pytest.raises(ValueError):
        shift_invert_lanczos(A, A, 5)
    with pytest.raises(ValueError):
        shift_invert_lanczos(A, A, 2, v0=np.zeros(5))


def test_non_convergence_carries_partial_results():
    A, B = random_pencil(60, 3)
    with pytest.raises(EigenConvergenceError) as info:
        shift_invert_lanczos(sps.csc_matrix(A), sps.csc_matrix(B), 10, ncv=12, max_restarts=0, tol=1e-14)
    lam, X = info.value.partial
    assert len(lam) == X.shape[1] < 10


def small_problem(ell=2):
    fe = build_system(generate_structured("square_checkerboard", 1 / 3), ell)
    return fe, CoefficientField.checkerboard(0.5), PenaltyParams(alpha=0.7)


def test_small_mesh_lanczos_matches_dense():
    fe, coeffs, params = small_problem()
    assert fe.n_dofs <= 200
    A, B = assemble_pencil(fe, coeffs, params)
    dense = dense_generalized_eigs(A, B)
    positive = dense[dense > 0]
    res = solve_eigs(fe, coeffs, params, k=10)
    assert np.allclose(res.eigenvalues, positive[:10], rtol=1e-8, atol=0)
    assert res.residual_norms.max() <= 1e-8


def test_arpack_cross_check():
    fe, coeffs, params = small_problem(3)
    ours = solve_eigs(fe, coeffs, params, k=6)
    ref = solve_eigs(fe, coeffs, params, k=6, backend="arpack")
    assert np.allclose(ours.eigenvalues, ref.eigenvalues, rtol=1e-8)
    with pytest.raises(ValueError):
        solve_eigs(fe, coeffs, params, k=2, backend="qz")


def test_gradient_modes_sit_at_minus_one_over_c():
    fe, coeffs, params = small_problem()
    A, B = assemble_pencil(fe, coeffs, params)
    dense = dense_generalized_eigs(A, B)
    c = params.c_alpha * fe.mesh.h ** (2 * (1 - params.alpha))
    negative = dense[dense < 0]
    assert negative.size > 0
    assert np.allclose(negative, -1.0 / c, rtol=1e-8)


def test_eigen_rejects_alpha_one():
    fe, coeffs, _ = small_problem()
    with pytest.raises(ValueError, match="alpha"):
        solve_eigs(fe, coeffs, PenaltyParams(alpha=1.0), k=3)
    res = solve_eigs(fe, coeffs, PenaltyParams(alpha=1.0, allow_alpha_one=True), k=3)
    assert len(res.eigenvalues) == 3


def test_solution_operator_is_self_adjoint():
    """g -> E_h(g) - c grad P_h(g) is symmetric in the eps-weighted L2 product."""
    fe = build_system(generate_structured("square_checkerboard", 0.25), 2)
    coeffs = CoefficientField([1.0, 0.4, 2.0, 0.7], [1.0, 1.5, 0.5, 2.0])
    params = PenaltyParams(alpha=0.7)
    A = assemble_ah(fe, coeffs, params).matrix
    S = source_matrix(fe, coeffs, params)
    G = eps_gram(fe, coeffs, params)
    fact = factorize(A)
    rng = np.random.default_rng(5)
    for _ in range(20):
        x, y = rng.standard_normal((2, fe.n_dofs))
        ax, ay = fact.solve(S @ x), fact.solve(S @ y)
        lhs, rhs = ax @ (G @ y), x @ (G @ ay)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs))


@pytest.mark.xfail(
    strict=True,
    reason="structured meshes give a larger first-eigenvalue error than unstructured Delaunay meshes",
)
def test_checkerboard_first_eigenvalue_at_h_01():
    fe = build_system(make_mesh("square_checkerboard", 0.1), 2)
    res = solve_eigs(fe, CoefficientField.checkerboard(0.5), PenaltyParams(alpha=0.7), k=1)
    assert abs(res.eigenvalues[0] - 3.3175) / 3.3175 <= 2 * 1.833e-4


def test_smooth_field_error_ratio_per_halving():
    """Degree 1, unit coefficients, divergence-free bubble field: errors shrink at least 3.5x per halving."""
    bubble = CurlBubble()
    errors = []
    for n in (8, 16, 32, 64):
        fe = build_system(make_mesh("unit_square_single", 1 / n), 2)
        field = solve_bvp(fe, CoefficientField.uniform(), PenaltyParams(alpha=0.5), g=bubble.source,
                          g_t=tangential_data(bubble.field))
        assert field.residual <= 1e-10
        errors.append(l2_error(fe, field, bubble.field, singular_point=None)[1])
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    assert np.all(ratios >= 3.5), ratios
