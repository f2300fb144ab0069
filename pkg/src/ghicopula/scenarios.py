"""Scenario generation through the noon-anchored Markov tree, plus benchmarks.

Random-number layout: scenario ``k`` owns the stream
``Generator(Philox(SeedSequence(seed, spawn_key=(k,))))`` and draws one
``(365 * years, 24)`` block of uniforms.  Row ``d`` belongs to day ``d``;
column ``h`` drives hour ``h`` and column 12 drives the noon value (the
daily chain in C2, the independent noon draw in C1).  Because Philox is
counter based, the block of any (scenario, day) is addressable without
generating the rest of the scenario.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betaincinv

from .bounds import BoundsModel
from .calendar_io import DAYS, HOURS
from .copulas import CopulaSpec, h_inverse
from .errors import ConvergenceFailure, DimensionMismatch, TotalExceedsEnvelope
from .marginals import MarginalModel

NOON = 12
VARIANTS = ("C1", "C2")
# maps k / 2^53 from Generator.random onto the open interval
_HALF_ULP = 2.0**-54


@dataclass(eq=False)
class ModelBundle:
    """Everything the simulator needs.  ``intraday[j]`` links hours ``j`` and ``j + 1``."""

    bounds: BoundsModel
    marginals: MarginalModel
    intraday: dict[int, CopulaSpec]
    noon: CopulaSpec | None = None
    variant: str = "C2"
    name: str = ""

    def __post_init__(self):
        self.variant = self.variant.upper()
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "C2" and self.noon is None:
            raise ValueError("variant C2 needs a noon-to-noon copula")
        day = self.bounds.daylight
        if not day[:, NOON].all():
            raise ValueError("hour 12 must be a daylight hour on every day")
        for j in range(HOURS - 1):
            if (day[:, j] & day[:, j + 1]).any() and j not in self.intraday:
                raise ValueError(f"no copula for the hour pair ({j}, {j + 1})")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "name": self.name,
            "noon": None if self.noon is None else self.noon.to_dict(),
            "intraday": {str(j): s.to_dict() for j, s in sorted(self.intraday.items())},
            "bounds": self.bounds.to_dict(),
            "marginals": self.marginals.to_dict(),
        }

    @property
    def bundle_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(eq=False)
class ScenarioSet:
    """``ghi`` has shape (m, 365 * years, 24) in Wh/m^2."""

    ghi: np.ndarray
    seed: int | None
    bundle_id: str
    variant: str
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.ghi.shape[0]

    @property
    def n_days(self) -> int:
        return self.ghi.shape[1]

    def metadata(self) -> dict:
        return {"seed": self.seed, "bundle_id": self.bundle_id, "variant": self.variant,
                "name": self.name, "m": self.m, "n_days": self.n_days, **self.meta}

    def daily_totals(self) -> np.ndarray:
        return self.ghi.sum(axis=2)

    def save(self, path) -> Path:
        """``.npy`` array plus a JSON sidecar; both byte-reproducible."""
        path = Path(path).with_suffix(".npy")
        np.save(path, self.ghi, allow_pickle=False)
        path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path, mmap: bool = False) -> "ScenarioSet":
        path = Path(path).with_suffix(".npy")
        meta = json.loads(path.with_suffix(".json").read_text())
        ghi = np.load(path, mmap_mode="r" if mmap else None, allow_pickle=False)
        extra = {k: v for k, v in meta.items() if k not in {"seed", "bundle_id", "variant", "name", "m", "n_days"}}
        return cls(ghi, meta["seed"], meta["bundle_id"], meta["variant"], meta.get("name", ""), extra)

    def write_csv(self, path, chunk_size: int = 1000, header_comment: str | None = None) -> list[Path]:
        """Long format ``scenario,d,h,ghi_whm2``; one file per ``chunk_size`` scenarios."""
        path = Path(path)
        written = []
        n_days = self.n_days
        d_col = np.repeat(np.arange(1, n_days + 1), HOURS)
        h_col = np.tile(np.arange(HOURS), n_days)
        for c, start in enumerate(range(0, self.m, chunk_size)):
            target = path if self.m <= chunk_size else path.with_name(f"{path.stem}_{c:04d}{path.suffix}")
            with open(target, "w") as fh:
                if header_comment:
                    fh.write(f"# {header_comment}\n")
                fh.write("scenario,d,h,ghi_whm2\n")
                for k in range(start, min(start + chunk_size, self.m)):
                    block = np.column_stack([np.full(d_col.size, k), d_col, h_col])
                    vals = self.ghi[k].ravel()
                    lines = [f"{a},{b},{c_},{v:.17g}" for (a, b, c_), v in zip(block.tolist(), vals.tolist())]
                    fh.write("\n".join(lines) + "\n")
            written.append(target)
        path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True))
        return written


def scenario_uniforms(seed: int, k: int, n_days: int) -> np.ndarray:
    """The (n_days, 24) block of open-interval uniforms owned by scenario ``k``."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))
    return gen.random((n_days, HOURS)) + _HALF_ULP


def _propagate(bundle: ModelBundle, V: np.ndarray, daylight: np.ndarray, first: int) -> np.ndarray:
    """Map the driving uniforms ``V`` (c, D, 24) to copula-coupled uniforms."""
    c, n_days, _ = V.shape
    U = np.zeros_like(V)
    noon_v = V[:, :, NOON]
    if bundle.variant == "C2" and bundle.noon.family != "independence":
        chain = np.empty((c, n_days))
        chain[:, 0] = noon_v[:, 0]
        for d in range(1, n_days):
            chain[:, d] = h_inverse(bundle.noon, chain[:, d - 1], noon_v[:, d])
        U[:, :, NOON] = chain
    else:
        U[:, :, NOON] = noon_v
    order = [(j, j + 1, j) for j in range(NOON - 1, -1, -1)] + [(j, j - 1, j - 1) for j in range(NOON + 1, HOURS)]
    for j, nb, pair in order:
        rows = daylight[:, j]
        if not rows.any():
            continue
        spec = bundle.intraday.get(pair)
        if spec is None or spec.family == "independence":
            U[:, rows, j] = V[:, rows, j]
            continue
        try:
            U[:, rows, j] = h_inverse(spec, U[:, rows, nb], V[:, rows, j])
        except ConvergenceFailure as exc:
            raise ConvergenceFailure(f"scenarios {first}..{first + c - 1}, hour {j}: {exc}") from exc
    return U


def simulate(bundle: ModelBundle, m: int, seed: int, years: int = 1, chunk: int = 500, name: str | None = None) -> ScenarioSet:
    """Simulate ``m`` independent scenarios of ``years`` consecutive years each.

    Scenario ``k`` depends only on ``(bundle, seed, k)``, so any subset can
    be regenerated by simulating with the same seed.
    """
    if m < 1 or years < 1:
        raise ValueError("m and years must be positive")
    if seed is None:
        raise ValueError("an explicit seed is required")
    n_days = DAYS * years
    day_idx = np.tile(np.arange(DAYS), years)
    daylight = bundle.marginals.daylight[day_idx]
    a_grid, b_grid = bundle.marginals.shapes()
    lo = bundle.bounds.lower[day_idx]
    span = (bundle.bounds.upper - bundle.bounds.lower)[day_idx]
    a_cells = a_grid[day_idx][daylight]
    b_cells = b_grid[day_idx][daylight]
    lo_cells, span_cells = lo[daylight], span[daylight]
    out = np.zeros((m, n_days, HOURS))
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        V = np.stack([scenario_uniforms(seed, k, n_days) for k in range(start, stop)])
        U = _propagate(bundle, V, daylight, start)
        M = betaincinv(a_cells, b_cells, U[:, daylight])
        block = np.zeros_like(U)
        block[:, daylight] = lo_cells + M * span_cells
        out[start:stop] = block
    return ScenarioSet(out, seed, bundle.bundle_id, bundle.variant, name or bundle.name,
                       {"years": years, "generator": "Philox/SeedSequence(seed, spawn_key=(k,))"})


def benchmark_hs(ghi_learn: np.ndarray, m: int, seed: int, name: str = "HS") -> ScenarioSet:
    """Historical simulation: every (d, h) drawn uniformly from the learn years."""
    ghi_learn = np.asarray(ghi_learn, dtype=float)
    n = ghi_learn.shape[0]
    out = np.empty((m, DAYS, HOURS))
    dd, hh = np.meshgrid(np.arange(DAYS), np.arange(HOURS), indexing="ij")
    for k in range(m):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))
        pick = gen.integers(0, n, (DAYS, HOURS))
        out[k] = ghi_learn[pick, dd, hh]
    blob = hashlib.sha256(np.ascontiguousarray(ghi_learn).tobytes()).hexdigest()[:16]
    return ScenarioSet(out, seed, blob, "HS", name, {"learn_years": n})


def benchmark_da(daily_totals: np.ndarray, bounds: BoundsModel, name: str = "DA", rtol: float = 1e-9) -> ScenarioSet:
    """Deterministic allocation of daily totals proportional to the upper-bound profile."""
    totals = np.asarray(daily_totals, dtype=float)
    if totals.ndim == 1:
        totals = totals[None, :]
    n_days = totals.shape[1]
    if n_days % DAYS:
        raise DimensionMismatch("daily totals must cover whole years")
    day_idx = np.tile(np.arange(DAYS), n_days // DAYS)
    profile = bounds.upper[day_idx]
    cap = profile.sum(axis=1)
    if np.any(totals > cap * (1 + rtol)):
        raise TotalExceedsEnvelope("a daily total exceeds the daily sum of the upper bound")
    share = np.divide(profile, cap[:, None], out=np.zeros_like(profile), where=cap[:, None] > 0)
    out = totals[:, :, None] * share[None, :, :]
    return ScenarioSet(out, None, "", "DA", name, {})
