import numpy as np
import pytest

from magspec.certificate import (
    PROFILE_CUTOFF,
    DefectReport,
    PartitionOfUnity,
    admissible_window,
    build_partition,
    certify_resolvent_point,
    defect,
    defect_operator,
    defect_split,
    gamma,
    gamma_hat,
    gamma_tilde,
    profile,
    write_defect_csv,
)
from magspec.errors import ConfigError, SpectrumProximityError
from magspec.models import ModelSpec, build_harper, constant_field, signed_square_phase
from magspec.operators import Grid, KernelOperator, PhaseFunction, sh_norm, twist
from magspec.spectral import eigvalsh, op_norm, spectral_distance


@pytest.fixture(scope="module")
def harper1d():
    H, phi = build_harper(ModelSpec("harper", Grid(1, 128)))
    return H, phi, eigvalsh(H)


@pytest.fixture(scope="module")
def harper2d():
    H, phi = build_harper(ModelSpec("harper", Grid(2, 16)), constant_field(1.0))
    return H, phi, eigvalsh(H)


class TestProfile:
    def test_plateaus(self):
        assert np.all(profile([0, 0.25, 0.5]) == 1)
        assert np.all(profile([1.5, 2.0, 7.0]) == 0)

    def test_c1_matching(self):
        d = 1e-7
        for r in (0.5, PROFILE_CUTOFF):
            assert abs(profile(r + d) - profile(r - d)) / (2 * d) < 1e-6

    def test_monotone(self):
        r = np.linspace(0, 2, 401)
        assert np.all(np.diff(profile(r)) <= 0)


class TestPartition:
    @pytest.mark.parametrize("dim, L", [(1, 128), (2, 24)])
    def test_invariants_across_window(self, dim, L):
        grid = Grid(dim, L)
        lo, hi = admissible_window(grid)
        rng = np.random.default_rng(dim)
        for b in np.geomspace(lo, hi, 6):
            P = build_partition(grid, b)
            assert np.max(np.abs(P.square_sum() - 1)) <= 1e-12
            assert P.multiplicity().max() <= 5**dim
            assert P.max_neighbors <= 5**dim
            assert P.support_radius() <= 2 / np.sqrt(b) + grid.h * np.sqrt(dim)
            idx = rng.integers(0, grid.n, 100)
            assert np.max(np.abs(P.square_sum()[idx] - 1)) <= 1e-12

    def test_out_of_window(self):
        grid = Grid(1, 64)
        with pytest.raises(ConfigError, match=r"\(8/L\)\^2"):
            build_partition(grid, 1e-3)
        with pytest.raises(ConfigError):
            build_partition(grid, 1.5)

    def test_centers_are_scaled_lattice(self):
        P = build_partition(Grid(2, 16), 0.25)
        assert np.allclose(P.center_points, 2 * P.centers)
        assert np.issubdtype(P.centers.dtype, np.integer)


def random_family(rng, P, scale=1.0):
    n = P.grid.n
    return [scale * rng.uniform(0.1, 2) * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(n) for _ in range(len(P))]


class TestGammaMaps:
    def test_zero_family(self):
        P = build_partition(Grid(1, 64), 0.1)
        out = gamma([np.zeros((64, 64))] * len(P), P)
        assert np.all(out.entries == 0)

    def test_single_center(self, rng):
        P = build_partition(Grid(1, 64), 0.1)
        fam = [np.zeros((64, 64))] * len(P)
        T = rng.normal(size=(64, 64))
        fam = list(fam)
        fam[3] = T
        G = gamma(fam, P).matrix
        X = np.zeros(64)
        X[P.supports[3]] = 1
        assert np.allclose(G, X[:, None] * T * X[None, :])
        assert op_norm(G) <= op_norm(T) * (1 + 1e-12)

    @pytest.mark.parametrize("dim, L, b", [(1, 64, 0.05), (2, 12, 0.5)])
    def test_lemma1_bound(self, rng, dim, L, b):
        P = build_partition(Grid(dim, L), b)
        for _ in range(100 if dim == 1 else 20):
            fam = random_family(rng, P)
            sup = max(op_norm(T) for T in fam)
            assert op_norm(gamma(fam, P)) <= 5**dim * sup

    def test_gamma_tilde_bound(self, rng):
        P = build_partition(Grid(1, 64), 0.05)
        for _ in range(20):
            fam = random_family(rng, P)
            psi = rng.normal(size=64) + 1j * rng.normal(size=64)
            out = gamma_tilde(fam, P, psi)
            assert np.all(out >= 0)
            assert np.linalg.norm(out) <= 5 * max(op_norm(T) for T in fam) * np.linalg.norm(psi)

    def test_gamma_hat(self, rng):
        grid = Grid(1, 64)
        P = build_partition(grid, 0.05)
        A = KernelOperator(grid, np.exp(-grid.distances))
        for _ in range(20):
            fam = random_family(rng, P)
            sup = max(op_norm(T) for T in fam)
            psi1, psi2 = rng.normal(size=(2, 64))
            g1, g2 = gamma_hat(A, fam, P, psi1), gamma_hat(A, fam, P, psi2)
            assert np.linalg.norm(g1) <= 5 * op_norm(A) * sup * np.linalg.norm(psi1)
            diff = gamma_hat(A, fam, P, psi1 - psi2)
            assert np.linalg.norm(g1 - g2) <= np.linalg.norm(diff) * (1 + 1e-12)
        assert np.all(gamma_hat(A, fam, P, np.zeros(64)) == 0)

    def test_gamma_hat_rejects_negative(self):
        grid = Grid(1, 16)
        P = build_partition(grid, 0.5)
        with pytest.raises(ValueError):
            gamma_hat(KernelOperator(grid, -np.eye(16)), [np.eye(16)] * len(P), P, np.ones(16))

    def test_family_length_checked(self):
        P = build_partition(Grid(1, 16), 0.5)
        with pytest.raises(ValueError):
            gamma([np.eye(16)], P)


class TestDefect:
    def test_diagonal_operator_has_no_defect(self, harper1d):
        grid = harper1d[0].grid
        D = KernelOperator(grid, np.diag(np.linspace(0, 3, grid.n)), hermitian=True)
        rep = defect(D, signed_square_phase(1.0), 0.05, -1.0, build_partition(grid, 0.05))
        assert rep.norm_S <= 1e-12

    def test_b_zero(self, harper1d):
        H, phi, sigma = harper1d
        rep = defect(H, phi, 0.0, sigma.min - 1, None)
        assert rep.norm_S <= 1e-10 and rep.certified

    def test_split_consistency(self, harper1d, harper2d):
        for H, phi, sigma in (harper1d, harper2d):
            lo = admissible_window(H.grid)[0]
            for b in (lo, 0.3):
                P = build_partition(H.grid, b)
                for z in (sigma.min - 1, sigma.min - 1 + 1j):
                    S = defect_operator(H, phi, b, z, P, spectrum=sigma).matrix
                    S1, S2 = defect_split(H, phi, b, z, P, spectrum=sigma)
                    assert op_norm(S - S1.matrix - S2.matrix) <= 1e-8 * (1 + op_norm(S))

    def test_zero_phase_kills_s1(self, harper1d):
        H, _, sigma = harper1d
        zero = PhaseFunction(lambda x, y: np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1]), 0.0)
        S1, S2 = defect_split(H, zero, 0.05, sigma.min - 1, build_partition(H.grid, 0.05), spectrum=sigma)
        assert np.all(S1.entries == 0)
        assert op_norm(S2) > 0

    def test_constant_partition_kills_s2(self, harper1d):
        H, phi, sigma = harper1d
        P0 = build_partition(H.grid, 0.05)
        n = H.grid.n
        coarse = PartitionOfUnity(
            H.grid, P0.b, P0.centers[:1], np.zeros((1, 1)), np.ones((1, n)), (np.arange(n),), (np.array([0]),)
        )
        S1, S2 = defect_split(H, phi, 0.05, sigma.min - 1, coarse, spectrum=sigma)
        assert op_norm(S2) <= 1e-12
        assert op_norm(S1) > 0

    def test_exponential_half_power(self, harper1d):
        H, phi, sigma = harper1d
        z = sigma.min - 1
        r = [defect(H, phi, b, z, build_partition(H.grid, b), spectrum=sigma).norm_S for b in (0.01, 0.04)]
        assert 2 / 1.5 <= r[1] / r[0] <= 2 * 1.5

    def test_report_fields(self, harper1d):
        H, phi, sigma = harper1d
        z = sigma.min - 2
        rep = defect(H, phi, 0.04, z, build_partition(H.grid, 0.04), spectrum=sigma)
        assert rep.norm_S <= rep.norm_S1 + rep.norm_S2 + 1e-8
        expected = 0.04**0.5 * sh_norm(H, 1.0).value / spectral_distance(z, sigma)
        assert rep.bound_value == pytest.approx(expected)

    def test_spectrum_point_rejected(self, harper1d):
        H, phi, sigma = harper1d
        with pytest.raises(SpectrumProximityError):
            defect(H, phi, 0.04, sigma.values[10], build_partition(H.grid, 0.04), spectrum=sigma)

    def test_partition_must_match_b(self, harper1d):
        H, phi, sigma = harper1d
        with pytest.raises(ConfigError):
            defect(H, phi, 0.04, sigma.min - 1, build_partition(H.grid, 0.1), spectrum=sigma)

    def test_inner_compression_is_smaller(self, harper1d):
        H, phi, sigma = harper1d
        P = build_partition(H.grid, 0.04)
        full = defect(H, phi, 0.04, sigma.min - 1, P, spectrum=sigma)
        inner = defect(H, phi, 0.04, sigma.min - 1, P, spectrum=sigma, inner_fraction=0.8)
        assert inner.norm_S <= full.norm_S * (1 + 1e-12)


class TestCertificate:
    def test_far_point_certified(self, harper1d):
        H, phi, sigma = harper1d
        z = sigma.min - 10 * sh_norm(H, 1.0).value
        lo, hi = admissible_window(H.grid)
        for b in np.geomspace(lo, hi, 5):
            cert = certify_resolvent_point(H, phi, b, z, build_partition(H.grid, b), spectrum=sigma)
            assert cert.in_resolvent and cert.margin > 0

    def test_certified_points_are_in_resolvent(self, harper1d):
        H, phi, sigma = harper1d
        rng = np.random.default_rng(1)
        zs = rng.uniform(sigma.min - 1.5, sigma.max + 1.5, 30) + 1j * rng.uniform(-0.3, 0.3, 30)
        for b in (0.01, 0.1):
            P = build_partition(H.grid, b)
            sigma_b = eigvalsh(twist(H, phi, b))
            for z in zs:
                if spectral_distance(z, sigma) <= 1e-6 * sigma.source_norm:
                    continue
                if certify_resolvent_point(H, phi, b, z, P, spectrum=sigma).in_resolvent:
                    assert spectral_distance(z, sigma_b) > 0

    def test_negative_b_uses_abs_partition(self, harper1d):
        H, phi, sigma = harper1d
        P = build_partition(H.grid, 0.04)
        rep = defect(H, phi, -0.04, sigma.min - 1, P, spectrum=sigma)
        assert rep.certified

    def test_interchanged_roles_comparable(self, harper1d):
        # the reversed certificate is a different operator, so only the scale is compared
        H, phi, sigma = harper1d
        b = 0.04
        P = build_partition(H.grid, b)
        fwd = defect(H, phi, b, sigma.min - 1, P, spectrum=sigma)
        Hb = twist(H, phi, b)
        sigma_b = eigvalsh(Hb)
        back = defect(Hb, phi, -b, sigma_b.min - 1, P, spectrum=sigma_b)
        assert 0.5 <= back.norm_S / fwd.norm_S <= 2.0


def test_csv_rows(tmp_path):
    rep = DefectReport(0.1, complex(-1, 0.5), 0.3, 0.2, 0.15, 0.9, True)
    path = write_defect_csv(tmp_path / "c.csv", [rep, (0.1, 2.0, "error: on spectrum")], ["seed=0"])
    lines = path.read_text().split("\n")
    assert lines[0] == "# seed=0"
    assert lines[1] == "b,re_z,im_z,norm_S,norm_S1,norm_S2,bound_value,certified,status"
    assert lines[2].startswith("0.10000000000000001,-1,0.5,") and lines[2].endswith(",true,ok")
    assert lines[3] == "0.10000000000000001,2,0,,,,,,error: on spectrum"
