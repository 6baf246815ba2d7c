"""
Experiment configuration files.

A configuration is a YAML mapping with the keys below; anything else is
rejected with the offending line number.

.. code-block:: yaml

    problem:
      kind: quadratic          # or logistic
      n: 100                   # quadratic only
      seed: 1                  # quadratic data / logistic sample split
      dataset: mushrooms       # logistic only; relative to $INDO_DATA_DIR
      m: 1.0e-4                # logistic regularization
      n_features: 112          # logistic, optional
    network:
      N: 30
      seed: 0
    iterations: 1000           # default K for every run
    output_dir: out/fig1
    x0: 0.0                    # constant initial primal value
    monitors:
      lyapunov: false
      inequalities: false
      rate_report: true
    runs:
      - variant: indo          # indo | esom
        alpha: M               # number, or a multiple of M or m: 0.01M, 2*m
        eps: M
        gamma: null            # INDO only; null picks the practical value
        ell: 1                 # fixed inner count, or
        eta: null              # forcing term (mutually exclusive with ell)
        warm_start: true
        initial_solve: false
        residual_norm: "2"     # "2" or "inf"
        checked: true
        iterations: 1000       # overrides the top-level K
        label: null            # defaults to INDO-l / ESOM-l-alpha-eps
"""

import os
import re
from dataclasses import dataclass, field

import yaml

DATA_ENV = "INDO_DATA_DIR"

_SYMBOLIC = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)?\s*\*?\s*(M|m)\s*$")


class ConfigParseError(ValueError):
    """Invalid configuration; `line` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


@dataclass(frozen=True)
class Scalar:
    """A number, or a multiple of the curvature bound M or m."""

    coef: float
    symbol: str = None

    def value(self, m, M):
        if self.symbol is None:
            return self.coef
        return self.coef * (M if self.symbol == "M" else m)

    @property
    def text(self):
        if self.symbol is None:
            return "%g" % self.coef
        if self.coef == 1.0:
            return self.symbol
        return "%g%s" % (self.coef, self.symbol)


def parse_scalar(raw):
    if isinstance(raw, bool):
        raise ValueError("expected a number, got %r" % raw)
    if isinstance(raw, (int, float)):
        return Scalar(float(raw))
    if isinstance(raw, str):
        match = _SYMBOLIC.match(raw)
        if match:
            coef = float(match.group(1)) if match.group(1) else 1.0
            return Scalar(coef, match.group(2))
        try:
            return Scalar(float(raw))
        except ValueError:
            pass
    raise ValueError("expected a number or a multiple of M or m, got %r" % (raw,))


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "quadratic"
    n: int = 100
    seed: int = 1
    dataset: str = None
    m: float = 1e-4
    n_features: int = None

    def dataset_path(self):
        """Resolve `dataset` against ``$INDO_DATA_DIR`` (default ``./data``)."""
        if os.path.isabs(self.dataset):
            return self.dataset
        return os.path.join(os.environ.get(DATA_ENV, "data"), self.dataset)


@dataclass(frozen=True)
class NetworkSpec:
    N: int = 30
    seed: int = 0


@dataclass(frozen=True)
class MonitorSpec:
    lyapunov: bool = False
    inequalities: bool = False
    rate_report: bool = True


@dataclass(frozen=True)
class RunSpec:
    variant: str = "indo"
    alpha: Scalar = Scalar(1.0, "M")
    eps: Scalar = Scalar(1.0, "M")
    gamma: float = None
    ell: int = 1
    eta: float = None
    warm_start: bool = True
    initial_solve: bool = False
    residual_norm: str = "2"
    checked: bool = True
    iterations: int = None
    label: str = None
    line: int = None

    @property
    def name(self):
        if self.label:
            return self.label
        inner = "eta%g" % self.eta if self.eta is not None else str(self.ell)
        if self.variant == "indo":
            return "INDO-%s" % inner
        return "ESOM-%s-%s-%s" % (inner, self.alpha.text, self.eps.text)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    network: NetworkSpec
    runs: tuple
    output_dir: str = "out"
    iterations: int = 100
    x0: float = 0.0
    monitors: MonitorSpec = field(default_factory=MonitorSpec)


# -- parsing ------------------------------------------------------------------

def _plain(node):
    """Convert a composed YAML node to Python objects, keeping mapping lines."""
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, val_node in node.value:
            key = key_node.value
            if key in out:
                raise ConfigParseError("duplicate key %r" % key, key_node.start_mark.line + 1)
            out[key] = (_plain(val_node), key_node.start_mark.line + 1)
        return _Section(out, node.start_mark.line + 1)
    if isinstance(node, yaml.SequenceNode):
        return [(_plain(v), v.start_mark.line + 1) for v in node.value]
    return yaml.constructor.SafeConstructor().construct_object(node, deep=True)


class _Section:
    """Mapping of key -> (value, line) with strict key checking."""

    def __init__(self, items, line):
        self.items = items
        self.line = line

    def check_keys(self, allowed, where):
        for key, (_, line) in self.items.items():
            if key not in allowed:
                raise ConfigParseError("unknown key %r in %s (allowed: %s)"
                                       % (key, where, ", ".join(sorted(allowed))), line)

    def get(self, key, default=None):
        return self.items[key] if key in self.items else (default, self.line)


def _typed(value, line, kind, name, positive=False, allow_none=False):
    if value is None and allow_none:
        return None
    try:
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError
            out = value
        elif kind is float:
            if isinstance(value, bool):
                raise ValueError
            out = float(value)
        elif kind is bool:
            if not isinstance(value, bool):
                raise ValueError
            out = value
        else:
            if not isinstance(value, str):
                raise ValueError
            out = value
    except (TypeError, ValueError):
        raise ConfigParseError("%s must be of type %s, got %r" % (name, kind.__name__, value),
                               line) from None
    if positive and not out > 0:
        raise ConfigParseError("%s must be positive, got %r" % (name, value), line)
    return out


def _section(section, line, where):
    if section is None:
        return _Section({}, line)
    if not isinstance(section, _Section):
        raise ConfigParseError("%s must be a mapping" % where, line)
    return section


def _parse_problem(sec, line):
    sec = _section(sec, line, "problem")
    sec.check_keys({"kind", "n", "seed", "dataset", "m", "n_features"}, "problem")
    kind, kline = sec.get("kind", "quadratic")
    if kind not in ("quadratic", "logistic"):
        raise ConfigParseError("problem.kind must be 'quadratic' or 'logistic', got %r" % kind,
                               kline)
    kw = {"kind": kind}
    for key, typ, positive in (("n", int, True), ("seed", int, False), ("m", float, True),
                               ("n_features", int, True), ("dataset", str, False)):
        if key in sec.items:
            val, vline = sec.items[key]
            kw[key] = _typed(val, vline, typ, "problem." + key, positive)
    if kind == "logistic" and "dataset" not in kw:
        raise ConfigParseError("logistic problems need problem.dataset", sec.line)
    if kind == "quadratic":
        for key in ("dataset", "n_features"):
            if key in kw:
                raise ConfigParseError("problem.%s is only used by logistic problems" % key,
                                       sec.items[key][1])
    if kind == "logistic" and "n" in kw:
        raise ConfigParseError("problem.n is set by the dataset for logistic problems",
                               sec.items["n"][1])
    return ProblemSpec(**kw)


def _parse_network(sec, line):
    sec = _section(sec, line, "network")
    sec.check_keys({"N", "seed"}, "network")
    kw = {}
    if "N" in sec.items:
        val, vline = sec.items["N"]
        kw["N"] = _typed(val, vline, int, "network.N", positive=True)
        if kw["N"] < 2:
            raise ConfigParseError("network.N must be at least 2", vline)
    if "seed" in sec.items:
        val, vline = sec.items["seed"]
        kw["seed"] = _typed(val, vline, int, "network.seed")
    return NetworkSpec(**kw)


def _parse_monitors(sec, line):
    sec = _section(sec, line, "monitors")
    allowed = {"lyapunov", "inequalities", "rate_report"}
    sec.check_keys(allowed, "monitors")
    kw = {k: _typed(v, vl, bool, "monitors." + k) for k, (v, vl) in sec.items.items()}
    return MonitorSpec(**kw)


RUN_KEYS = {"variant", "alpha", "eps", "gamma", "ell", "eta", "warm_start", "initial_solve",
            "residual_norm", "checked", "iterations", "label"}


def _parse_run(sec, line):
    sec = _section(sec, line, "run entry")
    sec.check_keys(RUN_KEYS, "run entry")
    kw = {"line": sec.line}
    for key, (val, vline) in sec.items.items():
        if key == "variant":
            if val not in ("indo", "esom"):
                raise ConfigParseError("variant must be 'indo' or 'esom', got %r" % val, vline)
            kw[key] = val
        elif key in ("alpha", "eps"):
            try:
                sc = parse_scalar(val)
            except ValueError as exc:
                raise ConfigParseError("%s: %s" % (key, exc), vline) from None
            if not sc.coef > 0:
                raise ConfigParseError("%s must be positive, got %r" % (key, val), vline)
            kw[key] = sc
        elif key in ("gamma", "eta"):
            kw[key] = _typed(val, vline, float, key, positive=True, allow_none=True)
        elif key in ("ell", "iterations"):
            kw[key] = _typed(val, vline, int, key, positive=True, allow_none=True)
        elif key in ("warm_start", "initial_solve", "checked"):
            kw[key] = _typed(val, vline, bool, key)
        elif key == "residual_norm":
            val = str(val)
            if val not in ("2", "inf"):
                raise ConfigParseError("residual_norm must be '2' or 'inf', got %r" % val, vline)
            kw[key] = val
        elif key == "label":
            kw[key] = _typed(val, vline, str, key, allow_none=True)
    if kw.get("eta") is not None:
        if "ell" in sec.items and sec.items["ell"][0] is not None:
            raise ConfigParseError("ell and eta are mutually exclusive", sec.items["ell"][1])
        if kw["eta"] >= 1.0:
            raise ConfigParseError("eta must lie in (0, 1)", sec.items["eta"][1])
    elif kw.get("ell", 1) is None:
        kw["ell"] = 1
    if kw.get("variant", "indo") == "esom" and kw.get("gamma") is not None:
        raise ConfigParseError("gamma only applies to indo runs", sec.items["gamma"][1])
    return RunSpec(**kw)


TOP_KEYS = {"problem", "network", "runs", "output_dir", "iterations", "x0", "monitors"}


def config_from_text(text, base_dir="."):
    """Parse configuration text; see the module docstring for the schema."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigParseError("invalid YAML: %s" % getattr(exc, "problem", exc),
                               mark.line + 1 if mark else None) from None
    if root is None:
        raise ConfigParseError("empty configuration", 1)
    top = _plain(root)
    if not isinstance(top, _Section):
        raise ConfigParseError("configuration must be a mapping", 1)
    top.check_keys(TOP_KEYS, "configuration")

    problem = _parse_problem(*top.get("problem"))
    network = _parse_network(*top.get("network"))
    monitors = _parse_monitors(*top.get("monitors"))
    iterations, iline = top.get("iterations", 100)
    iterations = _typed(iterations, iline, int, "iterations", positive=True)
    x0, xline = top.get("x0", 0.0)
    x0 = _typed(x0, xline, float, "x0")
    out, oline = top.get("output_dir", "out")
    out = _typed(out, oline, str, "output_dir")
    if not os.path.isabs(out):
        out = os.path.normpath(os.path.join(base_dir, out))

    runs_raw, rline = top.get("runs")
    if not isinstance(runs_raw, list) or not runs_raw:
        raise ConfigParseError("runs must be a nonempty list", rline)
    runs = tuple(_parse_run(val, vline) for val, vline in runs_raw)
    seen = {}
    for spec in runs:
        if spec.name in seen:
            raise ConfigParseError("duplicate run label %r (first at line %d)"
                                   % (spec.name, seen[spec.name]), spec.line)
        seen[spec.name] = spec.line
    return ExperimentConfig(problem, network, runs, out, iterations, x0, monitors)


def parse_config(path, validate=True):
    """
    Read an experiment configuration file.

    Relative `output_dir` values are resolved against the file's directory.
    With `validate`, each run is also checked against the resolved problem
    constants (explicit `gamma` inside the JOR interval), which needs the
    dataset for logistic problems; that check is skipped when the dataset
    is not available.

    Raises
    ------
    ConfigParseError
        With the line number of the offending entry.
    """
    with open(path) as fh:
        text = fh.read()
    config = config_from_text(text, base_dir=os.path.dirname(os.path.abspath(path)))
    if validate:
        from .harness import validate_runs

        validate_runs(config)
    return config
