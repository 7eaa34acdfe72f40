"""Grid partition, certified cell indicators, safe region, CSV/SVG products."""

import numpy as np
import pytest

from sceno.errors import ContractViolation
from sceno.explorer import (
    CSV_HEADER,
    CellResult,
    GridSpec,
    cell_box,
    csv_to_svg,
    explore,
    heatmap_to_csv,
    heatmap_to_svg,
    parse_heatmap_csv,
    safe_region,
    unsafe_indicator,
)
from sceno.mlp import Mlp, forward_batch
from sceno.verifier import Box, unit_box

from util import grid_min_oracle, random_net


def constant_net(m, value):
    return Mlp([np.zeros((1, m))], [np.zeros(1)], out_mean=value)


def coordinate_net(m, dim):
    w = np.zeros((1, m))
    w[0, dim] = 1.0
    return Mlp([w], [np.zeros(1)])


class TestCellBox:
    def test_single_cell_is_unit_box(self):
        spec = GridSpec(dim_a=0, dim_b=1, l=1, m=4)
        box = cell_box(spec, 0, 0)
        assert np.all(box.lo == 0.0) and np.all(box.hi == 1.0)

    def test_twenty_grid_corner_cell(self):
        spec = GridSpec(dim_a=0, dim_b=2, l=20, m=3)
        box = cell_box(spec, 0, 0)
        assert box.lo[0] == 0.0 and box.hi[0] == 0.05
        assert box.lo[2] == 0.0 and box.hi[2] == 0.05
        assert box.lo[1] == 0.0 and box.hi[1] == 1.0

    def test_cells_partition_unit_box(self):
        spec = GridSpec(dim_a=0, dim_b=1, l=4, m=2)
        total = 0.0
        for i in range(4):
            for j in range(4):
                b = cell_box(spec, i, j)
                total += np.prod(b.hi - b.lo)
        assert total == pytest.approx(1.0, abs=1e-12)
        # adjacent cells share faces
        left = cell_box(spec, 0, 0)
        right = cell_box(spec, 1, 0)
        assert left.hi[0] == right.lo[0]

    def test_out_of_range(self):
        spec = GridSpec(dim_a=0, dim_b=1, l=3, m=2)
        with pytest.raises(ContractViolation):
            cell_box(spec, 3, 0)

    def test_bad_spec(self):
        with pytest.raises(ContractViolation):
            GridSpec(dim_a=1, dim_b=1, l=4, m=3)
        with pytest.raises(ContractViolation):
            GridSpec(dim_a=0, dim_b=5, l=4, m=3)


class TestUnsafeIndicator:
    def test_constant_above_threshold(self):
        res = unsafe_indicator(constant_net(2, 1.1), unit_box(2), tau=0.1)
        assert res == CellResult(rho_ind=0.0, lower=1.1, converged=True)

    def test_constant_below_threshold(self):
        res = unsafe_indicator(constant_net(2, -0.2), unit_box(2), tau=0.1)
        assert res.rho_ind == pytest.approx(0.3, abs=1e-12)
        assert res.lower == -0.2

    def test_matches_lipschitz_grid_on_unsafe_cells(self):
        tau = 1.0  # far above these nets' ranges so every cell is unsafe
        for seed in range(5):
            f = random_net(seed + 40, [2, 8, 8, 1], out_std=1.2)
            spec = GridSpec(dim_a=0, dim_b=1, l=3, m=2)
            for i in range(3):
                cell = cell_box(spec, i, 1)
                res = unsafe_indicator(f, cell, tau, tol=1e-4, budget=20_000)
                oracle_lo, oracle_hi = grid_min_oracle(f, cell.lo, cell.hi, 200)
                want = tau - oracle_hi  # tau - sampled min <= true indicator
                assert res.rho_ind >= want - 1e-9
                assert res.rho_ind <= tau - oracle_lo + 1e-4 + 1e-9


class TestExplore:
    def test_constant_safe_net_all_zero(self):
        f = constant_net(2, 2.0)
        h = explore(f, GridSpec(dim_a=0, dim_b=1, l=5, m=2), tau=0.1)
        assert np.all(h.rho_indicator == 0.0)
        assert len(safe_region(h)) == 25

    def test_linear_coordinate_net(self):
        # f(theta) = theta_a with tau = 0.5: lower half unsafe by the slack,
        # upper half certified safe
        tau, l = 0.5, 20
        f = coordinate_net(2, 0)
        h = explore(f, GridSpec(dim_a=0, dim_b=1, l=l, m=2), tau=tau, tol=1e-6)
        delta = 1.0 / l
        for i in range(l):
            for j in range(l):
                if (i + 1) * delta <= tau:
                    assert h.rho_indicator[i, j] >= tau - (i + 1) * delta - 1e-6
                if i * delta >= tau:
                    assert h.rho_indicator[i, j] == 0.0
        want_safe = {(i, j) for i in range(l) if i * delta >= tau for j in range(l)}
        assert set(safe_region(h)) == want_safe

    def test_all_positive_has_empty_safe_region(self):
        h = explore(constant_net(2, -1.0), GridSpec(dim_a=0, dim_b=1, l=3, m=2), tau=0.1)
        assert safe_region(h) == []

    def test_refinement_never_loosens(self):
        f = random_net(60, [2, 8, 8, 1], out_mean=0.3, out_std=1.0)
        tau = 0.4
        coarse = explore(f, GridSpec(dim_a=0, dim_b=1, l=4, m=2), tau=tau, tol=1e-4)
        fine = explore(f, GridSpec(dim_a=0, dim_b=1, l=8, m=2), tau=tau, tol=1e-4)
        for i in range(8):
            for j in range(8):
                parent = coarse.rho_indicator[i // 2, j // 2]
                assert fine.rho_indicator[i, j] <= parent + 1e-4

    def test_safe_cells_hold_on_samples(self):
        f = random_net(61, [3, 10, 10, 1], out_mean=0.5, out_std=1.0)
        tau = 0.2
        spec = GridSpec(dim_a=0, dim_b=2, l=4, m=3)
        h = explore(f, spec, tau=tau)
        rng = np.random.default_rng(0)
        cells = safe_region(h)
        if not cells:
            pytest.skip("seeded net certified no safe cells at this threshold")
        for i, j in cells:
            box = cell_box(spec, i, j)
            pts = rng.uniform(box.lo, box.hi, size=(2_000, 3))
            assert forward_batch(f, pts).min() >= tau

    def test_indicator_conservative_for_samples(self):
        f = random_net(62, [2, 8, 8, 1], out_std=1.5)
        tau = 0.5
        spec = GridSpec(dim_a=0, dim_b=1, l=4, m=2)
        h = explore(f, spec, tau=tau)
        rng = np.random.default_rng(1)
        for i in range(4):
            for j in range(4):
                box = cell_box(spec, i, j)
                pts = rng.uniform(box.lo, box.hi, size=(500, 2))
                worst = max(0.0, tau - forward_batch(f, pts).min())
                assert h.rho_indicator[i, j] >= worst - 1e-9

    def test_deterministic(self):
        f = random_net(63, [2, 8, 8, 1])
        spec = GridSpec(dim_a=0, dim_b=1, l=3, m=2)
        a = heatmap_to_csv(explore(f, spec, tau=0.3))
        b = heatmap_to_csv(explore(f, spec, tau=0.3))
        assert a == b


class TestHeatmapProducts:
    def make_heatmap(self):
        return explore(coordinate_net(2, 0), GridSpec(dim_a=0, dim_b=1, l=4, m=2), tau=0.5)

    def test_csv_header_and_shape(self):
        csv = heatmap_to_csv(self.make_heatmap())
        lines = csv.strip().split("\n")
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 16

    def test_csv_round_trip(self):
        h = self.make_heatmap()
        rows = parse_heatmap_csv(heatmap_to_csv(h))
        for row in rows:
            assert row["rho_indicator"] == h.rho_indicator[row["i"], row["j"]]
            assert row["lower_bound"] == h.lower_bounds[row["i"], row["j"]]
            assert row["a_hi"] - row["a_lo"] == pytest.approx(0.25)

    def test_svg_renders_cells_and_legend(self):
        svg = heatmap_to_svg(self.make_heatmap())
        assert svg.startswith("<svg")
        assert svg.count("<rect") >= 16
        assert "rgb(" in svg and "</svg>" in svg

    def test_svg_deterministic(self):
        csv = heatmap_to_csv(self.make_heatmap())
        assert csv_to_svg(csv) == csv_to_svg(csv)

    def test_bad_csv_rejected(self):
        with pytest.raises(ContractViolation):
            parse_heatmap_csv("nope\n1,2,3\n")
