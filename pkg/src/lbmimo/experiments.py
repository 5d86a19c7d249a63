"""Experiment descriptions, figure-style sweeps and result files.

An experiment is described by an INI file (see ``configs/``) whose values can
be overridden from the command line. Results are long-format rows
``experiment,scheme,snr_db,metric,value,trials,errors,seed``.
"""

import configparser
import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

from . import __version__
from .bd import build_precoder_set
from .channel import ChannelSet, SystemConfig, draw_channel_batch, substream
from .errors import ConfigurationError, DegenerateChannelError
from .link import SchemeId, StoppingRule, run_ber
from .rates import c_bd_from_precoders, rate_ci, rate_sum_prop

__all__ = [
    "CSV_HEADER",
    "KINDS",
    "ExperimentSpec",
    "ResultRecord",
    "ResultRow",
    "curves_from_record",
    "emit_results",
    "load_spec",
    "parse_radius",
    "parse_snr_grid",
    "read_results",
    "run_ber_experiment",
    "run_experiment",
    "run_rates_experiment",
    "run_sweep_streams",
    "run_sweep_users",
]

CSV_HEADER = ("experiment", "scheme", "snr_db", "metric", "value", "trials", "errors", "seed")
KINDS = ("rates", "ber", "sweep-streams", "sweep-users")
RATE_CURVES = ("C_BD", "C_BD_per_user", "R_CI", "R_sum")


def parse_snr_grid(text):
    """``"start:stop:step"`` (stop inclusive) or a comma list, in dB."""
    text = str(text).strip()
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ConfigurationError(f"SNR step must be positive in {text!r}")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            grid = [round(start + i * step, 10) for i in range(max(n, 0))]
        else:
            grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad SNR grid {text!r}: {exc}") from None
    if not grid:
        raise ConfigurationError(f"SNR grid {text!r} is empty")
    return tuple(grid)


def parse_radius(value):
    """Integer radius, or ``None`` (unbounded search) for ``inf``/``none``."""
    if value is None:
        return None
    text = str(value).strip().lower()
    if text in ("inf", "none", "unbounded"):
        return None
    try:
        r = int(text)
    except ValueError:
        raise ConfigurationError(f"bad radius {value!r}") from None
    if r < 0:
        raise ConfigurationError("radius must be nonnegative")
    return r


def _int_list(text):
    try:
        return tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise ConfigurationError(f"bad integer list {text!r}") from None


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to rerun an experiment bit-identically."""

    kind: str
    n_rx: int = 2
    n_users: int = 2
    qam_order: int = 4
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    schemes: tuple = tuple(s.value for s in SchemeId)
    radius: int | None = None
    min_bit_errors: int = 200
    min_trials: int = 2000
    max_trials: int = 1_000_000
    block_size: int = 500
    tail_min_errors: int | None = None
    draws: int = 2000
    streams: tuple = (1, 2, 3, 4)
    users: tuple = (1, 2, 3, 4, 5)
    seed: int = 0
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not self.snr_db:
            raise ConfigurationError("SNR grid is empty")
        if self.format not in ("csv", "json"):
            raise ConfigurationError(f"unknown format {self.format!r}")
        if self.kind == "ber":
            if not self.schemes:
                raise ConfigurationError("ber experiment needs at least one scheme")
            object.__setattr__(self, "schemes", tuple(SchemeId.parse(s).value for s in self.schemes))
        if self.kind == "sweep-streams" and not self.streams:
            raise ConfigurationError("sweep-streams needs a streams list")
        if self.kind == "sweep-users" and not self.users:
            raise ConfigurationError("sweep-users needs a users list")
        if self.draws < 1 or self.block_size < 1:
            raise ConfigurationError("draws and block_size must be positive")
        # validates the geometry early
        self.system()
        self.stopping_rule()

    def system(self, n_rx=None, n_users=None):
        return SystemConfig.scenario(
            self.n_rx if n_rx is None else n_rx,
            self.n_users if n_users is None else n_users,
            qam_order=self.qam_order,
        )

    def stopping_rule(self):
        return StoppingRule(self.min_bit_errors, self.min_trials, self.max_trials)

    def to_dict(self):
        d = asdict(self)
        for key in ("snr_db", "schemes", "streams", "users"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("snr_db", "schemes", "streams", "users"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


_SECTIONS = {
    "experiment": {"kind": str, "seed": int, "out": str, "format": str},
    "system": {"n_rx": int, "n_users": int, "qam_order": int},
    "snr": {"grid": parse_snr_grid},
    "ber": {
        "schemes": lambda v: tuple(x.strip() for x in v.split(",") if x.strip()),
        "radius": parse_radius,
        "min_bit_errors": int,
        "min_trials": int,
        "max_trials": int,
        "block_size": int,
        "tail_min_errors": int,
    },
    "rates": {"draws": int},
    "sweep": {"streams": _int_list, "users": _int_list},
}


def load_spec(path=None, text=None, **overrides):
    """Read an INI experiment file; keyword overrides (not None) win."""
    parser = configparser.ConfigParser()
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None

    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            conv = _SECTIONS[section].get(key)
            if conv is None:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            try:
                value = conv(raw)
            except ValueError as exc:
                raise ConfigurationError(f"bad value for {section}.{key}: {exc}") from None
            values["snr_db" if key == "grid" else key] = value
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "kind" not in values:
        raise ConfigurationError("experiment kind is missing")
    try:
        return ExperimentSpec(**values)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


# -- results --------------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    scheme: str
    snr_db: float | None
    metric: str
    value: float
    trials: int | None
    errors: int | None
    seed: int


@dataclass
class ResultRecord:
    metadata: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def select(self, **criteria):
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in criteria.items())]

    def value(self, **criteria):
        rows = self.select(**criteria)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {criteria}")
        return rows[0].value


def _timestamp():
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible files
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _metadata(spec, **extra):
    # the output path is dropped so a file's content does not depend on where it lives
    echo = {k: v for k, v in spec.to_dict().items() if k != "out"}
    meta = {"spec": echo, "version": __version__, "timestamp": _timestamp()}
    meta.update(extra)
    return meta


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(record):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in record.rows:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
    return buf.getvalue()


def _json_text(record):
    doc = {"metadata": record.metadata, "rows": [asdict(r) for r in record.rows]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_results(record, fmt="csv", path=None):
    """Write ``record`` as CSV or JSON; with ``path=None`` return the text instead."""
    if fmt == "csv":
        text = _csv_text(record)
    elif fmt == "json":
        text = _json_text(record)
    else:
        raise ConfigurationError(f"unknown format {fmt!r}")
    if path is None:
        return text
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write results to {path}: {exc.strerror}") from exc
    return text


def _parse_row(d):
    def opt(v, conv):
        return None if v in ("", None) else conv(v)

    return ResultRow(
        experiment=d["experiment"],
        scheme=d["scheme"],
        snr_db=opt(d["snr_db"], float),
        metric=d["metric"],
        value=float(d["value"]),
        trials=opt(d["trials"], int),
        errors=opt(d["errors"], int),
        seed=int(d["seed"]),
    )


def read_results(path, fmt=None):
    """Inverse of :func:`emit_results`. CSV files carry rows only."""
    if fmt is None:
        fmt = "json" if str(path).endswith(".json") else "csv"
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if fmt == "json":
        doc = json.loads(text)
        return ResultRecord(doc["metadata"], [_parse_row(r) for r in doc["rows"]])
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ConfigurationError(f"{path}: unexpected CSV header {reader.fieldnames}")
    return ResultRecord({}, [_parse_row(r) for r in reader])


# -- experiments ------------------------------------------------------------


def _precoder_draws(cfg, seed, draws):
    """``draws`` non-degenerate precoder sets; draw ``d`` retries on substream ``(seed, d, attempt)``."""
    sets, redraws = [], 0
    for d in range(draws):
        attempt = 0
        while True:
            h = draw_channel_batch(substream(seed, d, attempt), cfg, 1)[0]
            try:
                sets.append(build_precoder_set(ChannelSet(h), cfg))
                break
            except DegenerateChannelError:
                redraws += 1
                attempt += 1
    return sets, redraws


def _rate_rows(label, cfg, snrs, draws, seed):
    pre_sets, redraws = _precoder_draws(cfg, seed, draws)
    rows = []
    for snr_db in snrs:
        # unit noise, per-user power rho, total K * rho
        rho = 10.0 ** (snr_db / 10.0)
        sums = dict.fromkeys(RATE_CURVES, 0.0)
        for pre in pre_sets:
            sums["C_BD"] += c_bd_from_precoders(pre, cfg.n_users * rho, 1.0).sum_rate
            sums["C_BD_per_user"] += c_bd_from_precoders(pre, cfg.n_users * rho, 1.0, per_user=True).sum_rate
            sums["R_CI"] += rate_ci(pre, rho).sum_rate
            sums["R_sum"] += rate_sum_prop(pre, rho).sum_rate
        for curve in RATE_CURVES:
            rows.append(ResultRow(label, curve, float(snr_db), "sum_rate", sums[curve] / draws, draws, None, seed))
    return rows, redraws


def run_rates_experiment(spec):
    """Average sum rates (C_BD in both constraint modes, R_CI, R_sum) per SNR point."""
    if spec.kind != "rates":
        raise ConfigurationError(f"expected a rates experiment, got {spec.kind!r}")
    rows, redraws = _rate_rows("rates", spec.system(), spec.snr_db, spec.draws, spec.seed)
    return ResultRecord(_metadata(spec, redraws=redraws), rows)


def run_sweep_streams(spec):
    """Sum rates against the number of streams per user (``n_rx``), ``n_users`` fixed."""
    if spec.kind != "sweep-streams":
        raise ConfigurationError(f"expected a sweep-streams experiment, got {spec.kind!r}")
    rows, redraws = [], {}
    for n in spec.streams:
        label = f"sweep-streams[n_rx={n}]"
        r, redraws[label] = _rate_rows(label, spec.system(n_rx=n), spec.snr_db, spec.draws, spec.seed)
        rows.extend(r)
    return ResultRecord(_metadata(spec, redraws=redraws), rows)


def run_sweep_users(spec):
    """Sum rates against the number of users, ``n_rx`` fixed."""
    if spec.kind != "sweep-users":
        raise ConfigurationError(f"expected a sweep-users experiment, got {spec.kind!r}")
    rows, redraws = [], {}
    for k in spec.users:
        label = f"sweep-users[n_users={k}]"
        r, redraws[label] = _rate_rows(label, spec.system(n_users=k), spec.snr_db, spec.draws, spec.seed)
        rows.extend(r)
    return ResultRecord(_metadata(spec, redraws=redraws), rows)


def run_ber_experiment(spec, workers=None):
    """BER curves for every listed scheme, on common random streams."""
    if spec.kind != "ber":
        raise ConfigurationError(f"expected a ber experiment, got {spec.kind!r}")
    cfg = spec.system()
    rows = []
    for name in spec.schemes:
        curve = run_ber(
            cfg,
            name,
            spec.snr_db,
            spec.stopping_rule(),
            spec.seed,
            radius=spec.radius,
            workers=workers,
            block_size=spec.block_size,
            tail_min_errors=spec.tail_min_errors,
        )
        for p in curve.points:
            base = dict(experiment="ber", scheme=curve.scheme, snr_db=p.snr_db, seed=p.seed, trials=p.trials)
            rows.append(ResultRow(metric="ber", value=p.ber, errors=p.bit_errors, **base))
            rows.append(ResultRow(metric="bits", value=float(p.bits_simulated), errors=None, **base))
            rows.append(ResultRow(metric="redraws", value=float(p.redraws), errors=None, **base))
    return ResultRecord(_metadata(spec), rows)


def run_experiment(spec, workers=None):
    runners = {
        "rates": run_rates_experiment,
        "sweep-streams": run_sweep_streams,
        "sweep-users": run_sweep_users,
    }
    if spec.kind == "ber":
        return run_ber_experiment(spec, workers)
    return runners[spec.kind](spec)


def curves_from_record(record):
    """Group BER rows back into ``{scheme: [(snr_db, errors, bits, trials), ...]}``."""
    out = {}
    bits = {(r.scheme, r.snr_db): r.value for r in record.rows if r.metric == "bits"}
    for r in record.rows:
        if r.metric == "ber":
            out.setdefault(r.scheme, []).append((r.snr_db, r.errors, int(bits[(r.scheme, r.snr_db)]), r.trials))
    return out
