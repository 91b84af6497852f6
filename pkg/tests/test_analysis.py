import json

import numpy as np
import pytest

from magspec.analysis import (
    HolderFit,
    SweepTable,
    alpha0_pipeline,
    fit_holder,
    harper_operator,
    hausdorff_sweep,
    log_grid,
    model_hash,
    sweep_defect,
    sweep_hausdorff,
    theorem2_compare,
)
from magspec.errors import ConfigError, PositivityError
from magspec.models import FieldSpec, ModelSpec, constant_field
from magspec.operators import Grid, twist
from magspec.spectral import eigvalsh, op_norm

B_GRID = np.geomspace(8**2 / 96**2, 0.5, 6)


@pytest.fixture(scope="module")
def harper_spec():
    return ModelSpec("harper", Grid(1, 96))


class TestFit:
    def test_exact_power_law(self):
        b = np.geomspace(1e-4, 1e-1, 10)
        fit = fit_holder(SweepTable(b, 3 * b**0.5, "d_H"))
        assert abs(fit.slope - 0.5) <= 1e-10
        assert abs(fit.constant - 3) <= 1e-10
        assert abs(fit.r_squared - 1) <= 1e-10
        assert fit.ratio_stable and fit.sup_ratio == pytest.approx(3)

    def test_constant_data(self):
        b = np.geomspace(1e-3, 1, 6)
        fit = fit_holder(SweepTable(b, np.full(6, 0.2), "norm_S"), beta_ref=0.0)
        assert abs(fit.slope) <= 1e-12 and fit.r_squared == 1.0

    def test_perturbed_power_law(self):
        b = np.geomspace(1e-4, 1e-1, 18)
        fit = fit_holder(SweepTable(b, b**0.5 * (1 + 0.1 * np.sin(np.log(b))), "d_H"))
        assert 0.45 <= fit.slope <= 0.55

    def test_zero_rows_excluded(self):
        b = np.r_[0.0, np.geomspace(1e-3, 1e-1, 5)]
        v = np.r_[0.0, 1e-16, 2 * b[2:] ** 0.5]
        fit = fit_holder(SweepTable(b, v, "d_H"))
        assert fit.n_rows == 4 and fit.slope == pytest.approx(0.5)

    def test_too_few_rows(self):
        b = np.geomspace(1e-3, 1e-1, 3)
        with pytest.raises(ValueError):
            fit_holder(SweepTable(b, b, "d_H"))

    def test_unstable_ratio_detected(self):
        # decays slower than b^(1/2): the small-b ratios blow up
        b = np.geomspace(1e-4, 1e-1, 9)
        assert not fit_holder(SweepTable(b, b**0.2, "d_H"), 0.5).ratio_stable

    def test_faster_decay_is_compliant(self):
        b = np.geomspace(1e-4, 1e-1, 9)
        assert fit_holder(SweepTable(b, b**2, "d_H"), 0.5).ratio_stable

    def test_json(self, tmp_path):
        fit = HolderFit(0.5, np.log(2.0), 0.99, 2.5, True, 0.5)
        data = json.loads(fit.to_json(tmp_path / "f.json", seed=1).read_text())
        assert set(data) == {"slope", "constant", "r2", "sup_ratio", "ratio_stable", "beta_ref", "seed"}
        assert data["constant"] == pytest.approx(2.0)


class TestSweepTable:
    def test_validation(self):
        with pytest.raises(ValueError):
            SweepTable([0.2, 0.1], [1, 1], "d_H")
        with pytest.raises(ValueError):
            SweepTable([0.1, 0.2], [1, -1], "d_H")
        with pytest.raises(ValueError):
            SweepTable([0.1, 0.2], [1, 1], "other")

    def test_csv_round_trip(self, tmp_path):
        t = SweepTable([0.0, 1 / 3, 0.5], [0.0, 0.1, 2 / 3], "rb_gap", "abc123", {"re_z": "-1"})
        path = t.to_csv(tmp_path / "t.csv", seed=7)
        text = path.read_text()
        assert "\r" not in text and text.endswith("\n")
        assert "0.33333333333333331,0.10000000000000001" in text
        back = SweepTable.from_csv(path)
        assert np.array_equal(back.b, t.b) and np.array_equal(back.values, t.values)
        assert back.quantity == "rb_gap" and back.model_hash == "abc123" and back.metadata["seed"] == "7"

    def test_log_grid_default_density(self):
        assert len(log_grid(1e-4, 1e-1)) == 18


def test_model_hash_stable():
    a = model_hash(ModelSpec("harper", Grid(1, 32)), FieldSpec("signed_square"))
    b = model_hash(ModelSpec("harper", Grid(1, 32)), FieldSpec("signed_square"))
    c = model_hash(ModelSpec("harper", Grid(1, 32), J=2.0), FieldSpec("signed_square"))
    assert a == b != c and len(a) == 16


class TestHausdorffSweep:
    def test_zero_and_weyl(self, harper_spec):
        b = np.r_[0.0, B_GRID]
        table = sweep_hausdorff(harper_spec, None, b)
        assert table.values[0] == 0.0
        H, phi = harper_operator(harper_spec)
        for bi, v in zip(table.b, table.values):
            assert v <= op_norm(twist(H, phi, bi).matrix - H.matrix) + 1e-12

    def test_window_enforced(self, harper_spec):
        with pytest.raises(ConfigError):
            sweep_hausdorff(harper_spec, None, [1e-4, 1e-2])

    def test_base_point_invariance(self, harper_spec):
        H, phi = harper_operator(harper_spec)
        b0 = 0.3
        deltas = B_GRID[:4]
        pre = hausdorff_sweep(twist(H, phi, b0), phi, deltas)
        direct = hausdorff_sweep(H, phi, deltas, base_b=b0)
        assert np.max(np.abs(pre.values - direct.values)) <= 1e-9

    def test_workers_do_not_change_output(self, harper_spec, tmp_path):
        one = sweep_hausdorff(harper_spec, None, B_GRID, workers=1).to_csv(tmp_path / "a.csv")
        three = sweep_hausdorff(harper_spec, None, B_GRID, workers=3).to_csv(tmp_path / "b.csv")
        assert one.read_bytes() == three.read_bytes()


class TestDefectSweep:
    def test_rows_and_meta(self, harper_spec):
        H, _ = harper_operator(harper_spec)
        z = eigvalsh(H).min - 1
        reports = []
        table = sweep_defect(harper_spec, None, z, B_GRID, reports=reports)
        assert table.quantity == "norm_S" and len(reports) == len(B_GRID)
        assert np.all(np.diff(table.values) > 0)
        assert float(table.metadata["re_z"]) == z

    def test_singleton_cannot_be_fitted(self, harper_spec):
        H, _ = harper_operator(harper_spec)
        table = sweep_defect(harper_spec, None, eigvalsh(H).min - 1, [0.05])
        with pytest.raises(ValueError):
            fit_holder(table)


class TestResolventComparison:
    def spec(self, a_shift=3.0):
        return ModelSpec("mag_schrodinger", Grid(2, 10), a_shift=a_shift)

    def test_b_zero(self):
        gap, rb = theorem2_compare(self.spec(), constant_field(0.5), constant_field(1.0), None, [0.0, 0.01])
        assert gap.values[0] == 0 and rb.values[0] == 0
        assert gap.quantity == "resolvent_gap" and rb.quantity == "rb_gap"

    def test_linear_in_b(self):
        b = np.geomspace(1e-3, 1e-1, 5)
        _, rb = theorem2_compare(self.spec(), constant_field(0.5), constant_field(1.0), None, b)
        assert 0.85 <= fit_holder(rb, 1.0).slope <= 1.15

    def test_positivity_failure(self):
        with pytest.raises(PositivityError):
            theorem2_compare(self.spec(), constant_field(0.5), constant_field(1.0), -5.0, [0.0, 0.01])


@pytest.fixture(scope="module")
def heavy():
    return ModelSpec("longrange", Grid(1, 96), decay_type="power", decay_rate=1.05)


class TestAlpha0:
    def test_chain(self, heavy):
        rep = alpha0_pipeline(heavy, None, [0.01, 0.05, 0.2, 1.0], [2.0, 8.0, 32.0, 96.0])
        assert len(rep.rows) == 16 and rep.all_hold and rep.u_monotone

    def test_full_range_collapses(self, heavy):
        rep = alpha0_pipeline(heavy, None, [0.01, 0.1], [heavy.grid.diameter])
        for row in rep.rows:
            assert row.u == 0
            assert abs(row.d_full - row.d_trunc) <= 1e-10

    def test_csv(self, heavy, tmp_path):
        rep = alpha0_pipeline(heavy, None, [0.1], [4.0])
        lines = rep.to_csv(tmp_path / "a.csv", seed=0).read_text().splitlines()
        assert lines[-2] == "b,M,u,d_full,d_trunc,bound,holds"
        assert lines[-1].endswith(",true")
