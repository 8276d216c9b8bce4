"""Ingestion, run orchestration, grid sweeps and report emission.

Input format: delimiter-separated text with a header row
``t, p_1 .. p_H, q_1 .. q_H, y_1 .. y_H`` and one row per step. Row t holds
the forecasts issued at t and the outcomes realised at t+1 .. t+H, so
consecutive rows overlap in H-1 outcome columns. Trailing rows whose
outcome horizon is incomplete (empty or ``nan`` cells) are dropped.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import platform
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, DegenerateScaleError, ESelectionError, IngestError
from .fusion import CODE_SOURCES, SOURCE_CODES, Source, Strategy, blend, decide_batch
from .savi import WindowSeries, log_threshold, p_value_from_log_e
from .scores import ForecastTriple, batch_scores
from .transform import DEFAULT_CALIBRATION_LENGTH, TransformSpec, bound, calibrate_scale, unbound

log = logging.getLogger(__name__)

STEPS_PER_HOUR = 4
DEFAULT_LAG = 96
DEFAULT_LAM_GRID = tuple(round(0.01 * k, 2) for k in range(1, 100))
DEFAULT_WINDOW_GRID = (4, 8) + tuple(96 * d for d in range(1, 15))
EVIDENCE_SCOPES = ("series", "selection")
EXCLUSION_PREDICATE = (
    "cell excluded when no hypothesis is rejected at any basis step, "
    "i.e. the procedure never reaches a conclusion and only the initial arm is used"
)

_DURATION = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([hd]?)\s*$", re.IGNORECASE)


def parse_duration(value, steps_per_hour: int = STEPS_PER_HOUR) -> int:
    """Window length in steps from ``"672"``, ``"1h"``, ``"7d"`` or an int."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        steps = int(value)
    else:
        m = _DURATION.match(str(value))
        if not m:
            raise ConfigError(f"cannot parse duration {value!r}")
        amount, unit = float(m.group(1)), m.group(2).lower()
        per = {"": 1, "h": steps_per_hour, "d": 24 * steps_per_hour}[unit]
        raw = amount * per
        steps = int(round(raw))
        if abs(raw - steps) > 1e-9:
            raise ConfigError(f"duration {value!r} is not a whole number of steps")
    if steps < 1:
        raise ConfigError(f"window must be at least one step, got {value!r}")
    return steps


def parse_lam_grid(text) -> list[float]:
    """``"0.1,0.5"``, ``"0.01:0.99:0.01"`` (inclusive) or ``"default"``."""
    if isinstance(text, (int, float)):
        return [float(text)]
    if not isinstance(text, str):
        return [float(x) for x in text]
    text = text.strip()
    if text == "default":
        return list(DEFAULT_LAM_GRID)
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            try:
                lo, hi, step = (float(x) for x in part.split(":"))
            except ValueError:
                raise ConfigError(f"bad lambda range {part!r}; expected lo:hi:step") from None
            if step <= 0:
                raise ConfigError(f"lambda range step must be positive in {part!r}")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            out.extend(round(lo + k * step, 10) for k in range(n))
        elif part:
            try:
                out.append(float(part))
            except ValueError:
                raise ConfigError(f"bad lambda value {part!r}") from None
    return out


def parse_window_grid(text, steps_per_hour: int = STEPS_PER_HOUR) -> list[int]:
    if isinstance(text, (int, np.integer)):
        return [parse_duration(text, steps_per_hour)]
    if not isinstance(text, str):
        return [parse_duration(x, steps_per_hour) for x in text]
    if text.strip() == "default":
        return list(DEFAULT_WINDOW_GRID)
    return [parse_duration(x, steps_per_hour) for x in text.split(",") if x.strip()]


def _unique(seq):
    return sorted(set(seq), key=lambda x: (str(type(x)), x))


@dataclass
class RunConfig:
    input_path: Optional[str] = None
    alpha: float = 0.05
    lam: list = field(default_factory=lambda: [0.1])
    window: list = field(default_factory=lambda: [672])
    strategy: list = field(default_factory=lambda: [Strategy.PERSISTENCE])
    lag: int = DEFAULT_LAG
    calibration_length: int = DEFAULT_CALIBRATION_LENGTH
    seed: int = 0
    output_dir: Optional[str] = None
    initial_arm: str = "P"
    steps_per_hour: int = STEPS_PER_HOUR
    check_shift: bool = True
    jobs: int = 1
    evidence_scope: str = "series"

    def __post_init__(self):
        self.lam = parse_lam_grid(self.lam)
        self.window = parse_window_grid(self.window, self.steps_per_hour)
        strategies = [self.strategy] if isinstance(self.strategy, (str, Strategy)) else list(self.strategy)
        if strategies and isinstance(strategies[0], str) and not isinstance(strategies[0], Strategy):
            strategies = [s for item in strategies for s in str(item).split(",") if s.strip()]
        try:
            self.strategy = [Strategy.parse(s.strip() if isinstance(s, str) else s) for s in strategies]
        except ESelectionError as exc:
            raise ConfigError(str(exc)) from None
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.lam or not self.window or not self.strategy:
            raise ConfigError("lambda, window and strategy grids must be non-empty")
        for lam in self.lam:
            if not 0.0 < lam < 1.0:
                raise ConfigError(f"lambda must lie in (0, 1), got {lam}")
        if self.lag < 0:
            raise ConfigError(f"lag must be non-negative, got {self.lag}")
        if self.calibration_length < 2:
            raise ConfigError(f"calibration length must be >= 2, got {self.calibration_length}")
        if str(self.initial_arm).upper() not in ("P", "Q"):
            raise ConfigError(f"initial arm must be P or Q, got {self.initial_arm}")
        self.initial_arm = str(self.initial_arm).upper()
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.evidence_scope not in EVIDENCE_SCOPES:
            raise ConfigError(f"evidence_scope must be one of {EVIDENCE_SCOPES}, got {self.evidence_scope!r}")
        if self.steps_per_hour < 1:
            raise ConfigError("steps_per_hour must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> dict:
        """Raw mapping from a JSON config file (merged by the CLI)."""
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return data

    def single(self):
        """The one (lam, window, strategy) of a non-grid run."""
        if len(set(self.lam)) != 1 or len(set(self.window)) != 1 or len(set(self.strategy)) != 1:
            raise ConfigError("a single run needs exactly one lambda, window and strategy")
        return self.lam[0], self.window[0], self.strategy[0]

    @property
    def initial(self) -> Source:
        return Source(self.initial_arm)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = [s.value for s in self.strategy]
        return d


# ---------------------------------------------------------------- ingestion

def _sniff_delimiter(header: str) -> str:
    for d in ("\t", ";", ","):
        if d in header:
            return d
    return ","


def _parse_float(cell: str, line: int, what: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise IngestError(f"non-numeric {what} cell {cell!r}", line) from None


def ingest(path, delimiter: Optional[str] = None, check_shift: bool = True, rtol: float = 1e-9) -> list[ForecastTriple]:
    """Read and validate a forecast file; see the module docstring for the layout."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from None
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise IngestError(f"{path} is empty")
    header_line, header = lines[0]
    delim = delimiter or _sniff_delimiter(header)
    cols = [c.strip().lower() for c in next(csv.reader([header], delimiter=delim))]
    if (len(cols) - 1) % 3 != 0 or len(cols) < 4:
        raise IngestError(f"header must be t followed by 3*H columns, got {len(cols)} columns", header_line)
    H = (len(cols) - 1) // 3
    for block, prefix in enumerate("pqy"):
        names = cols[1 + block * H:1 + (block + 1) * H]
        if not all(n.startswith(prefix) for n in names):
            raise IngestError(f"header columns {1 + block * H}..{(block + 1) * H} must be {prefix}_1..{prefix}_{H}",
                              header_line)

    steps, P, Q, Y, line_nos = [], [], [], [], []
    partial_from = None
    for line, raw in lines[1:]:
        row = next(csv.reader([raw], delimiter=delim))
        if len(row) != 1 + 3 * H:
            raise IngestError(f"expected {1 + 3 * H} cells, got {len(row)}", line)
        t_val = _parse_float(row[0], line, "step index")
        if not t_val.is_integer():
            raise IngestError(f"step index {row[0]!r} is not an integer", line)
        t = int(t_val)
        if steps and t <= steps[-1]:
            raise IngestError(f"step index {t} is not after {steps[-1]} (duplicate or out of order)", line)
        p = [_parse_float(c, line, "forecast P") for c in row[1:1 + H]]
        q = [_parse_float(c, line, "forecast Q") for c in row[1 + H:1 + 2 * H]]
        y = [math.nan if c.strip() == "" else _parse_float(c, line, "outcome") for c in row[1 + 2 * H:]]
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise IngestError("forecast cells must be finite", line)
        y_arr = np.array(y)
        if np.any(np.isinf(y_arr)):
            raise IngestError("outcome cells must be finite", line)
        incomplete = bool(np.any(np.isnan(y_arr)))
        if incomplete and partial_from is None:
            partial_from = line
        elif not incomplete and partial_from is not None:
            raise IngestError(f"complete row after incomplete outcomes starting at line {partial_from}", line)
        steps.append(t)
        if not incomplete:
            P.append(p)
            Q.append(q)
            Y.append(y)
            line_nos.append(line)
    if not P:
        raise IngestError(f"{path} has no rows with a complete outcome horizon")
    dropped = len(steps) - len(P)
    if dropped:
        log.info("dropped %d trailing rows with incomplete outcomes", dropped)

    Y_arr = np.array(Y)
    if check_shift and H > 1:
        for i in range(len(Y_arr) - 1):
            if steps[i + 1] != steps[i] + 1:
                continue
            a, b = Y_arr[i, 1:], Y_arr[i + 1, :-1]
            if not np.allclose(a, b, rtol=rtol, atol=rtol):
                raise IngestError("outcomes are not the previous row shifted by one step", line_nos[i + 1])
    triples = [ForecastTriple(t, np.array(p), np.array(q), y) for t, p, q, y in zip(steps, P, Q, Y_arr)]
    log.info("ingested N=%d steps with horizon H=%d from %s", len(triples), H, path)
    return triples


def write_triples(path, triples: Sequence[ForecastTriple], delimiter: str = ",") -> None:
    """Inverse of :func:`ingest` (used for exports and fixtures)."""
    H = triples[0].horizon
    header = ["t"] + [f"{c}_{k}" for c in "pqy" for k in range(1, H + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for tr in triples:
            w.writerow([tr.t] + [repr(float(x)) for x in np.concatenate([tr.p, tr.q, tr.y])])


def _matrices(triples: Sequence[ForecastTriple]):
    if not triples:
        raise DataError("no forecast steps")
    steps = np.array([tr.t for tr in triples], dtype=np.int64)
    return steps, np.stack([tr.p for tr in triples]), np.stack([tr.q for tr in triples]), np.stack([tr.y for tr in triples])


# ---------------------------------------------------------------- selection

@dataclass
class Prepared:
    """Scores and bounded differences shared by every cell of a sweep.

    ``evidence_scope`` says which bounded differences feed the e-processes:
    ``"series"`` uses every step from the first one (calibration steps
    included, windows truncated at the start of the series) and
    ``"selection"`` uses only post-calibration steps with full windows.
    Decisions and scores always cover the post-calibration steps only.
    """

    steps: np.ndarray
    p: np.ndarray
    q: np.ndarray
    y: np.ndarray
    mae_p: np.ndarray
    mae_q: np.ndarray
    delta_hat: np.ndarray
    spec: TransformSpec
    delta_tilde_all: np.ndarray
    uniforms: np.ndarray
    seed: int
    evidence_scope: str = "series"

    @property
    def calibration_length(self) -> int:
        return self.spec.calibration_length

    @property
    def delta_tilde(self) -> np.ndarray:
        """Bounded differences of the post-calibration steps."""
        return self.delta_tilde_all[self.calibration_length:]

    @property
    def n_selection(self) -> int:
        return len(self.delta_tilde_all) - self.calibration_length

    @property
    def evidence_offset(self) -> int:
        """Row of the first evidence step."""
        return 0 if self.evidence_scope == "series" else self.calibration_length

    def window_series(self, window: int) -> WindowSeries:
        partial = self.evidence_scope == "series"
        return WindowSeries.from_stream(self.delta_tilde_all[self.evidence_offset:], window, partial)


def prepare(triples: Sequence[ForecastTriple], calibration_length: int = DEFAULT_CALIBRATION_LENGTH,
            seed: int = 0, evidence_scope: str = "series") -> Prepared:
    steps, p, q, y = _matrices(triples)
    mae_p, mae_q = batch_scores(p, q, y)
    delta_hat = mae_p - mae_q
    try:
        spec = calibrate_scale(delta_hat, calibration_length)
    except DegenerateScaleError:
        if np.any(delta_hat != 0.0):
            raise
        # Indistinguishable forecasts: every bounded difference is 0 whatever
        # the scale, so any positive sigma gives the same run.
        log.warning("all score differences are zero; using sigma = 1")
        spec = TransformSpec(sigma=1.0, calibration_length=calibration_length)
    if evidence_scope not in EVIDENCE_SCOPES:
        raise ConfigError(f"evidence_scope must be one of {EVIDENCE_SCOPES}, got {evidence_scope!r}")
    delta_tilde_all = np.asarray(bound(delta_hat, spec))
    uniforms = np.random.default_rng(seed).random(max(len(delta_hat) - calibration_length, 0))
    return Prepared(steps, p, q, y, mae_p, mae_q, delta_hat, spec, delta_tilde_all, uniforms, seed, evidence_scope)


def _shift(a: np.ndarray, lag: int, fill):
    out = np.full(a.shape, fill, dtype=a.dtype)
    if lag == 0:
        out[:] = a
    elif lag < len(a):
        out[lag:] = a[:-lag]
    return out


@dataclass
class CellResult:
    lam: float
    window: int
    strategy: Strategy
    summary: dict
    records: Optional[dict] = None


def evaluate_cell(prep: Prepared, ws: WindowSeries, lam: float, strategy, alpha: float = 0.05,
                  lag: int = DEFAULT_LAG, initial: Source = Source.P, keep_records: bool = False) -> CellResult:
    """Run the full selection procedure for one (lambda, window, strategy)."""
    strategy = Strategy.parse(strategy)
    window = ws.window
    M = prep.n_selection
    C = prep.calibration_length
    N = C + M
    thr = log_threshold(alpha)

    # evidence on the full row axis; nan where no window is evaluated
    first = prep.evidence_offset + ws.first_position
    evidence_rows = slice(first, first + len(ws.sums))
    log_e_all = np.full(N, np.nan)
    log_e_star_all = np.full(N, np.nan)
    log_e_all[evidence_rows] = ws.log_e(lam)
    log_e_star_all[evidence_rows] = ws.log_e_star(lam)
    has_verdict_all = ~np.isnan(log_e_all)
    with np.errstate(invalid="ignore"):
        reject_pq_all = has_verdict_all & (log_e_all >= thr)
        reject_qp_all = has_verdict_all & (log_e_star_all >= thr)
    p_all = np.where(has_verdict_all, p_value_from_log_e(np.nan_to_num(log_e_all)), np.nan)
    p_star_all = np.where(has_verdict_all, p_value_from_log_e(np.nan_to_num(log_e_star_all)), np.nan)

    # decision at row r uses the verdict at row r - lag; bases inside the
    # calibration block are unusable because sigma depends on later rows
    available = _shift(has_verdict_all, lag, False)[C:] & (np.arange(C, N) - lag >= C)
    basis_pq = _shift(reject_pq_all, lag, False)[C:]
    basis_qp = _shift(reject_qp_all, lag, False)[C:]
    codes, w_p, anomalies = decide_batch(
        basis_pq, basis_qp, _shift(p_all, lag, np.nan)[C:], _shift(p_star_all, lag, np.nan)[C:],
        available, strategy, prep.uniforms, initial,
    )

    log_e, log_e_star = log_e_all[C:], log_e_star_all[C:]
    reject_pq, reject_qp = reject_pq_all[C:], reject_qp_all[C:]
    p_val, p_star = p_all[C:], p_star_all[C:]

    mae_p = prep.mae_p[C:]
    mae_q = prep.mae_q[C:]
    fused = np.where(w_p >= 0.5, mae_p, mae_q)
    blended = codes == SOURCE_CODES[Source.FUSED]
    if blended.any():
        rows = np.flatnonzero(blended) + C
        value = blend(prep.p[rows], prep.q[rows], w_p[blended])
        fused[blended] = np.mean(np.abs(value - prep.y[rows]), axis=1)

    oracle = np.minimum(mae_p, mae_q)
    chosen = np.sign(w_p - 0.5)              # +1 P, -1 Q, 0 undecided
    better = np.sign(mae_q - mae_p)          # +1 P better, -1 Q better, 0 tie
    correct = (chosen != 0) & (chosen == better)
    arm = np.where(w_p >= 0.5, 1, 0)
    selection_steps = prep.steps[C:]
    first_pq = selection_steps[np.argmax(reject_pq)] if reject_pq.any() else None
    first_qp = selection_steps[np.argmax(reject_qp)] if reject_qp.any() else None
    decided = available & (codes != SOURCE_CODES[Source.WARMUP])
    any_rejection_used = bool(np.any(available & (basis_pq | basis_qp)))

    best = min(float(mae_p.mean()), float(mae_q.mean()))
    avg = float(fused.mean())
    summary = {
        "lam": lam,
        "window": window,
        "strategy": strategy.value,
        "n_steps": int(M),
        "n_warmup": int(np.sum(codes == SOURCE_CODES[Source.WARMUP])),
        "average_score": avg,
        "average_score_decided": float(fused[decided].mean()) if decided.any() else math.nan,
        "baseline_p": float(mae_p.mean()),
        "baseline_q": float(mae_q.mean()),
        "oracle": float(oracle.mean()),
        "deviation_p": float(mae_p.mean()) - avg,
        "deviation_q": float(mae_q.mean()) - avg,
        "deviation_best": best - avg,
        "fraction_better_selected": float(correct.mean()) if M else math.nan,
        "n_reject_pq": int(reject_pq.sum()),
        "n_reject_qp": int(reject_qp.sum()),
        "first_reject_pq_step": None if first_pq is None else int(first_pq),
        "first_reject_qp_step": None if first_qp is None else int(first_qp),
        "n_switches": int(np.sum(arm[1:] != arm[:-1])) if M > 1 else 0,
        "n_double_rejections": int(anomalies.sum()),
        "excluded": not any_rejection_used,
    }
    records = None
    if keep_records:
        v_all = np.full(N, np.nan)
        center_all = np.full(N, np.nan)
        half_all = np.full(N, np.nan)
        v_all[evidence_rows] = ws.v_hat
        center_all[evidence_rows] = ws.means
        half_all[evidence_rows] = ws.half_width(lam, alpha)
        v_hat, center, half = v_all[C:], center_all[C:], half_all[C:]
        lower, upper = center - half, center + half
        row_idx = np.arange(M) + C
        basis_rows = row_idx - lag
        basis_step = np.where(basis_rows >= 0, prep.steps[np.maximum(basis_rows, 0)], selection_steps - lag)
        records = {
            "t": selection_steps,
            "delta_hat": prep.delta_hat[C:],
            "delta_tilde": prep.delta_tilde,
            "rolling_mean": center,
            "rolling_mean_watts": _watts(center, prep.spec),
            "v_hat": v_hat,
            "log_e": log_e,
            "log_e_star": log_e_star,
            "p_value": p_val,
            "p_value_star": p_star,
            "reject_pq": reject_pq,
            "reject_qp": reject_qp,
            "lower": lower,
            "upper": upper,
            "lower_watts": _watts(lower, prep.spec),
            "upper_watts": _watts(upper, prep.spec),
            "source": np.array([CODE_SOURCES[c].value for c in codes]),
            "w_p": w_p,
            "w_q": 1.0 - w_p,
            "basis_step": basis_step,
            "mae_p": mae_p,
            "mae_q": mae_q,
            "fused_mae": fused,
        }
    return CellResult(lam, window, strategy, summary, records)


def _watts(d: np.ndarray, spec: TransformSpec) -> np.ndarray:
    out = np.full(d.shape, np.nan)
    inside = np.abs(d) < 0.5
    if inside.any():
        out[inside] = unbound(d[inside], spec)
    out[d >= 0.5] = np.inf
    out[d <= -0.5] = -np.inf
    return out


@dataclass
class SelectionRun:
    config: RunConfig
    sigma: float
    summary: dict
    records: dict


def _check_length(n: int, config: RunConfig, window: int) -> None:
    need = config.calibration_length + window + config.lag
    if n <= need:
        raise ConfigError(
            f"series has {n} steps; need more than calibration ({config.calibration_length}) "
            f"+ window ({window}) + lag ({config.lag}) = {need}"
        )


def run_selection(config: RunConfig, triples: Sequence[ForecastTriple]) -> SelectionRun:
    lam, window, strategy = config.single()
    _check_length(len(triples), config, window)
    prep = prepare(triples, config.calibration_length, config.seed, config.evidence_scope)
    ws = prep.window_series(window)
    cell = evaluate_cell(prep, ws, lam, strategy, config.alpha, config.lag, config.initial, keep_records=True)
    summary = dict(cell.summary, sigma=prep.spec.sigma)
    return SelectionRun(config, prep.spec.sigma, summary, cell.records)


def oracle_benchmark(triples: Sequence[ForecastTriple], calibration_length: int = DEFAULT_CALIBRATION_LENGTH) -> dict:
    """Average MAE of each forecast and of per-step best choice after calibration."""
    _, p, q, y = _matrices(triples)
    mae_p, mae_q = batch_scores(p, q, y)
    mae_p, mae_q = mae_p[calibration_length:], mae_q[calibration_length:]
    if not mae_p.size:
        raise ConfigError("no steps remain after calibration")
    diff = mae_p - mae_q
    return {
        "oracle": float(np.minimum(mae_p, mae_q).mean()),
        "baseline_p": float(mae_p.mean()),
        "baseline_q": float(mae_q.mean()),
        "n_steps": int(mae_p.size),
        "fraction_p_better": float(np.mean(diff < 0)),
        "fraction_q_better": float(np.mean(diff > 0)),
        "fraction_ties": float(np.mean(diff == 0)),
    }


# ---------------------------------------------------------------- sweep

@dataclass
class SweepResult:
    rows: list
    lams: list
    windows: list
    strategies: list
    sigma: float

    def heatmap(self, strategy) -> np.ndarray:
        """(window x lambda) improvement over the better baseline; nan if excluded."""
        strategy = Strategy.parse(strategy).value
        li = {lam: j for j, lam in enumerate(self.lams)}
        wi = {w: i for i, w in enumerate(self.windows)}
        out = np.full((len(self.windows), len(self.lams)), np.nan)
        for r in self.rows:
            if r["strategy"] == strategy and not r["excluded"]:
                out[wi[r["window"]], li[r["lam"]]] = r["deviation_best"]
        return out

    def improvement_fraction(self, strategy) -> float:
        strategy = Strategy.parse(strategy).value
        cells = [r for r in self.rows if r["strategy"] == strategy and not r["excluded"]]
        return float(np.mean([r["deviation_best"] > 0 for r in cells])) if cells else math.nan


_WORKER_PREP: Optional[Prepared] = None


def _init_worker(prep: Prepared) -> None:
    global _WORKER_PREP
    _WORKER_PREP = prep


def _sweep_window(args) -> list:
    window, lams, strategies, alpha, lag, initial = args
    prep = _WORKER_PREP
    t0 = time.perf_counter()
    ws = prep.window_series(window)
    t_ws = time.perf_counter() - t0
    rows = []
    for strategy in strategies:
        for lam in lams:
            t1 = time.perf_counter()
            cell = evaluate_cell(prep, ws, lam, strategy, alpha, lag, initial)
            row = dict(cell.summary, runtime_s=t_ws + time.perf_counter() - t1)
            rows.append(row)
    return rows


def run_sweep(config: RunConfig, triples: Sequence[ForecastTriple], jobs: Optional[int] = None) -> SweepResult:
    """Evaluate every (lambda, window, strategy) cell; grids are deduplicated.

    Window statistics do not depend on lambda and are computed once per
    window; ``runtime_s`` of a cell includes that shared cost.
    """
    global _WORKER_PREP
    lams = _unique(config.lam)
    windows = _unique(config.window)
    strategies = sorted(set(config.strategy), key=lambda s: s.value)
    _check_length(len(triples), config, max(windows))
    prep = prepare(triples, config.calibration_length, config.seed, config.evidence_scope)
    tasks = [(w, lams, strategies, config.alpha, config.lag, config.initial) for w in windows]
    jobs = config.jobs if jobs is None else jobs
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(prep,)) as pool:
            chunks = list(pool.map(_sweep_window, tasks))
    else:
        _WORKER_PREP = prep
        try:
            chunks = [_sweep_window(t) for t in tasks]
        finally:
            _WORKER_PREP = None
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["strategy"], r["window"], r["lam"]))
    return SweepResult(rows, lams, windows, [s.value for s in strategies], prep.spec.sigma)


# ---------------------------------------------------------------- reports

RECORD_COLUMNS = [
    "t", "delta_hat", "delta_tilde", "rolling_mean", "rolling_mean_watts", "v_hat", "log_e", "log_e_star",
    "p_value", "p_value_star", "reject_pq", "reject_qp", "lower", "upper", "lower_watts", "upper_watts",
    "source", "w_p", "w_q", "basis_step", "mae_p", "mae_q", "fused_mae",
]
SWEEP_COLUMNS = [
    "strategy", "window", "lam", "average_score", "baseline_p", "baseline_q", "oracle", "deviation_p",
    "deviation_q", "deviation_best", "fraction_better_selected", "n_switches", "n_reject_pq", "n_reject_qp",
    "excluded",
]


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, Strategy):
        return x.value
    return x


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])


def versions() -> dict:
    import numba
    import scipy

    return {
        "eselection": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


@dataclass
class Reports:
    config: Optional[RunConfig] = None
    run: Optional[SelectionRun] = None
    sweep: Optional[SweepResult] = None
    validation: Optional[dict] = None
    benchmark: Optional[dict] = None


def emit_reports(results: Reports, output_dir) -> list[Path]:
    """Write every available report plus ``metadata.json``; returns the paths.

    All files are deterministic given inputs and seed, except
    ``runtime.csv`` which holds wall-clock measurements.
    """
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        meta = {"versions": versions(), "threshold": "2/alpha per side", "files": []}
        if results.config is not None:
            meta["config"] = results.config.to_dict()
            meta["seed"] = results.config.seed
            meta["rng"] = "numpy default_rng(seed).random(n_selection_steps); draw k drives sampling at step k"

        if results.run is not None:
            rec = results.run.records
            path = out / "steps.csv"
            _write_csv(path, RECORD_COLUMNS, zip(*(rec[c] for c in RECORD_COLUMNS)))
            written.append(path)
            path = out / "summary.json"
            _write_json(path, results.run.summary)
            written.append(path)
            meta["sigma"] = results.run.sigma

        if results.sweep is not None:
            sw = results.sweep
            path = out / "sweep.csv"
            _write_csv(path, SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in sw.rows))
            written.append(path)
            path = out / "runtime.csv"
            _write_csv(path, ["strategy", "window", "lam", "runtime_s"],
                       ([r["strategy"], r["window"], r["lam"], r["runtime_s"]] for r in sw.rows))
            written.append(path)
            for strategy in sw.strategies:
                path = out / f"heatmap_{strategy}.csv"
                mat = sw.heatmap(strategy)
                _write_csv(path, ["window"] + list(sw.lams),
                           ([w] + list(mat[i]) for i, w in enumerate(sw.windows)))
                written.append(path)
            meta["sigma"] = sw.sigma
            meta["exclusion_predicate"] = EXCLUSION_PREDICATE
            meta["improvement_fraction"] = {s: sw.improvement_fraction(s) for s in sw.strategies}

        if results.validation is not None:
            path = out / "validation.json"
            _write_json(path, results.validation)
            written.append(path)

        if results.benchmark is not None:
            path = out / "benchmark.json"
            _write_json(path, results.benchmark)
            written.append(path)

        meta["files"] = sorted(p.name for p in written)
        path = out / "metadata.json"
        _write_json(path, meta)
        written.append(path)
    except OSError as exc:
        raise ESelectionError(f"cannot write reports to {out}: {exc}") from exc
    return written
