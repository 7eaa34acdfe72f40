"""Parameter-space exploration over a 2-D grid of certified cells.

Two associated parameter dimensions are partitioned into an l-by-l grid of
closed cells of side 1/l (all other dimensions stay free over [0,1]). For
each cell the verifier certifies a lower bound on the surrogate, and the
unsafe indicator is

    rho_ind = max(0, tau - certified_lower).

The indicator is conservative: it never understates how far the cell can
dip below the threshold, so zero-indicator cells form a sound
under-approximation of the surrogate's safe region.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .mlp import Mlp
from .verifier import DEFAULT_BUDGET, DEFAULT_TOL, Box, bab_min


@dataclass(frozen=True)
class GridSpec:
    """Which two dimensions are gridded, how finely, out of how many."""

    dim_a: int
    dim_b: int
    l: int
    m: int

    def __post_init__(self):
        if self.l < 1:
            raise ContractViolation("grid side l must be >= 1")
        if not (0 <= self.dim_a < self.m and 0 <= self.dim_b < self.m):
            raise ContractViolation(f"grid dims must be < {self.m}")
        if self.dim_a == self.dim_b:
            raise ContractViolation("associated dimensions must differ")

    @property
    def delta(self) -> float:
        return 1.0 / self.l


def cell_box(spec: GridSpec, i: int, j: int) -> Box:
    """Closed cell [i d,(i+1) d] x [j d,(j+1) d] x [0,1]^(m-2)."""
    if not (0 <= i < spec.l and 0 <= j < spec.l):
        raise ContractViolation(f"cell index ({i},{j}) outside {spec.l}x{spec.l} grid")
    lo = np.zeros(spec.m)
    hi = np.ones(spec.m)
    lo[spec.dim_a] = i / spec.l
    hi[spec.dim_a] = (i + 1) / spec.l
    lo[spec.dim_b] = j / spec.l
    hi[spec.dim_b] = (j + 1) / spec.l
    return Box(lo, hi)


@dataclass(frozen=True)
class CellResult:
    rho_ind: float
    lower: float
    converged: bool


def unsafe_indicator(
    f: Mlp,
    cell: Box,
    tau: float,
    tol: float = DEFAULT_TOL,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> CellResult:
    """Certified unsafe indicator of one cell.

    The search stops early once the lower bound clears tau (the indicator is
    already exactly zero then). On budget exhaustion the best sound lower
    bound still yields a conservative indicator; the cell is flagged.
    """
    res = bab_min(f, cell, tol=tol, budget=budget, seed=seed, stop_when_lower_ge=tau)
    return CellResult(
        rho_ind=max(0.0, tau - res.lower), lower=res.lower, converged=res.converged
    )


@dataclass(frozen=True)
class Heatmap:
    """Certified l x l map of unsafe indicators for two associated parameters."""

    spec: GridSpec
    rho_indicator: np.ndarray  # (l, l), [i][j]
    lower_bounds: np.ndarray   # (l, l)
    tau: float
    flags: np.ndarray          # (l, l) bool, True where the cell budget ran out

    def __post_init__(self):
        l = self.spec.l
        for name in ("rho_indicator", "lower_bounds", "flags"):
            arr = getattr(self, name)
            if arr.shape != (l, l):
                raise ContractViolation(f"{name} must be {l}x{l}, got {arr.shape}")
        if not np.isfinite(self.rho_indicator).all() or (self.rho_indicator < 0).any():
            raise ContractViolation("indicators must be finite and >= 0")
        expected = np.maximum(0.0, self.tau - self.lower_bounds)
        if not np.array_equal(expected, self.rho_indicator):
            raise ContractViolation("rho_indicator must equal max(0, tau - lower_bound)")


def explore(
    f: Mlp,
    spec: GridSpec,
    tau: float,
    tol: float = DEFAULT_TOL,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
) -> Heatmap:
    """Fill every cell of the grid with its certified unsafe indicator."""
    if spec.m != f.input_dim:
        raise ContractViolation(f"grid is {spec.m}-dimensional, network wants {f.input_dim}")
    l = spec.l
    rho = np.zeros((l, l))
    lower = np.zeros((l, l))
    flags = np.zeros((l, l), dtype=bool)
    for i in range(l):
        for j in range(l):
            cell = unsafe_indicator(f, cell_box(spec, i, j), tau, tol=tol, budget=budget, seed=seed)
            rho[i, j] = cell.rho_ind
            lower[i, j] = cell.lower
            flags[i, j] = not cell.converged
    return Heatmap(spec=spec, rho_indicator=rho, lower_bounds=lower, tau=tau, flags=flags)


def safe_region(h: Heatmap) -> list[tuple[int, int]]:
    """Cells certified safe: indicator exactly zero (lower bound >= tau)."""
    return [(int(i), int(j)) for i, j in np.argwhere(h.rho_indicator == 0.0)]


# ---------------------------------------------------------------------------
# CSV / SVG products
# ---------------------------------------------------------------------------

CSV_HEADER = "i,j,a_lo,a_hi,b_lo,b_hi,lower_bound,rho_indicator,flag"


def heatmap_to_csv(h: Heatmap) -> str:
    l = h.spec.l
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for i in range(l):
        for j in range(l):
            out.write(
                f"{i},{j},{repr(i / l)},{repr((i + 1) / l)},{repr(j / l)},{repr((j + 1) / l)},"
                f"{repr(float(h.lower_bounds[i, j]))},{repr(float(h.rho_indicator[i, j]))},"
                f"{int(h.flags[i, j])}\n"
            )
    return out.getvalue()


def parse_heatmap_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ContractViolation(f"heatmap CSV must start with header {CSV_HEADER!r}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 9:
            raise ContractViolation(f"bad heatmap CSV row: {ln!r}")
        rows.append(
            {
                "i": int(parts[0]),
                "j": int(parts[1]),
                "a_lo": float(parts[2]),
                "a_hi": float(parts[3]),
                "b_lo": float(parts[4]),
                "b_hi": float(parts[5]),
                "lower_bound": float(parts[6]),
                "rho_indicator": float(parts[7]),
                "flag": int(parts[8]),
            }
        )
    return rows


def _shade(value: float, vmax: float) -> str:
    # white at 0 up to a dark red at vmax
    frac = 0.0 if vmax <= 0 else min(1.0, value / vmax)
    r = round(255 - 135 * frac)
    gb = round(255 - 255 * frac)
    return f"rgb({r},{gb},{gb})"


def csv_to_svg(text: str, cell_px: int = 24) -> str:
    """Render a heatmap CSV as a standalone SVG grid with a legend.

    Darker cells carry larger indicators; the color scale is linear from 0
    to the maximum indicator in the file.
    """
    rows = parse_heatmap_csv(text)
    l = max(max(r["i"], r["j"]) for r in rows) + 1
    vmax = max(r["rho_indicator"] for r in rows)
    grid_px = l * cell_px
    legend_w = 70
    width = grid_px + legend_w + 20
    height = grid_px + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for r in sorted(rows, key=lambda r: (r["i"], r["j"])):
        x = 10 + r["i"] * cell_px
        y = 10 + (l - 1 - r["j"]) * cell_px
        fill = _shade(r["rho_indicator"], vmax)
        parts.append(
            f'<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" '
            f'fill="{fill}" stroke="#999" stroke-width="0.5"/>'
        )
    # legend: vertical gradient bar, max on top
    lx = grid_px + 25
    steps = 16
    bar_h = grid_px
    for s in range(steps):
        frac = 1.0 - s / (steps - 1)
        y = 10 + s * bar_h / steps
        parts.append(
            f'<rect x="{lx}" y="{y:.2f}" width="14" height="{bar_h / steps:.2f}" '
            f'fill="{_shade(frac * vmax, vmax)}"/>'
        )
    parts.append(
        f'<text x="{lx + 18}" y="18" font-size="10" font-family="monospace">{vmax:.4g}</text>'
    )
    parts.append(
        f'<text x="{lx + 18}" y="{10 + bar_h}" font-size="10" font-family="monospace">0</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_to_svg(h: Heatmap, cell_px: int = 24) -> str:
    return csv_to_svg(heatmap_to_csv(h), cell_px=cell_px)
