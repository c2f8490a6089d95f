"""Command-line front end: configuration, orchestration and persistence.

Parses a flat sectioned key-value config, dispatches the subcommands
(simulate, average, cgf, rate, oracle, check-identities, diagnose), writes
CSV tables with a '#'-prefixed metadata preamble, and appends a one-line
manifest record per run to runs.log for reproducibility.
"""

import argparse
import hashlib
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import calculus as cal
from . import diagnostics as dgn
from . import estimators as est
from . import model as mdl
from . import oracle as orc
from .dynamics import IntegratorConfig, integrate
from .streams import GENERATOR_NAME, stream


class ParseError(ValueError):
    """Malformed config file; carries path and line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class UnknownKeyError(ParseError):
    """Config key outside the schema."""


# ---------------------------------------------------------------------------
# Config schema and parsing.
# ---------------------------------------------------------------------------

MODEL_KEYS = {
    "n", "d", "u1.degree", "u1.a2", "u1.a4", "u2.degree", "u2.a2", "u2.a4",
    "lambda", "gamma", "t1", "tn",
}
INTEGRATOR_KEYS = {"h", "scheme", "quadrature"}
TASK_KEYS = {
    "alpha_grid", "t", "population", "windows", "w_grid", "theta",
    "energies", "burn_in", "replicas", "bonds", "box", "resolution",
    "tolerance", "sample_every", "samples", "alpha",
}
SECTIONS = {"model": MODEL_KEYS, "integrator": INTEGRATOR_KEYS,
            "task": TASK_KEYS}


@dataclass
class RunConfig:
    model: mdl.ChainModel
    integrator: IntegratorConfig
    task: dict
    raw_text: str = ""

    @property
    def digest(self):
        return hashlib.sha256(self.raw_text.encode()).hexdigest()[:16]


def _parse_sections(path, text):
    sections = {"model": {}, "integrator": {}, "task": {}}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in sections:
                raise ParseError(path, lineno, f"unknown section [{name}]")
            current = name
            continue
        if "=" not in line:
            raise ParseError(path, lineno, f"expected key = value, got {line!r}")
        if current is None:
            raise ParseError(path, lineno, "key outside any section")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in SECTIONS[current]:
            raise UnknownKeyError(
                path, lineno, f"unknown key {key!r} in section [{current}]"
            )
        if key in sections[current]:
            raise ParseError(path, lineno, f"duplicate key {key!r}")
        if not value:
            raise ParseError(path, lineno, f"empty value for {key!r}")
        sections[current][key] = (value, lineno)
    return sections


def _number(path, key, value, lineno):
    try:
        return float(value)
    except ValueError:
        raise ParseError(path, lineno, f"{key}: expected a number, got {value!r}")


def _number_list(path, key, value, lineno):
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ParseError(path, lineno,
                         f"{key}: expected comma-separated numbers, got {value!r}")


def _build_potential(path, sec, prefix):
    coeffs = {}
    for power in ("a2", "a4"):
        key = f"{prefix}.{power}"
        if key in sec:
            coeffs[power] = _number(path, key, *sec[key])
    if not coeffs:
        return None
    u = mdl.PotentialSpec.from_coeffs(**coeffs)
    key = f"{prefix}.degree"
    if key in sec:
        declared = int(_number(path, key, *sec[key]))
        if declared != u.degree:
            raise ParseError(path, sec[key][1],
                             f"{prefix}.degree={declared} does not match "
                             f"leading coefficient a{u.degree}")
    return u


def parse_config(path):
    """Parse a config file into a RunConfig (model + integrator + task)."""
    with open(path) as fh:
        text = fh.read()
    sections = _parse_sections(path, text)

    sec = sections["model"]
    for required in ("n", "d", "t1", "tn"):
        if required not in sec:
            raise ParseError(path, 0, f"[model] missing required key {required!r}")
    u1 = _build_potential(path, sec, "u1")
    if u1 is None:
        raise ParseError(path, 0, "[model] needs at least one u1 coefficient")
    u2 = _build_potential(path, sec, "u2")
    model = mdl.validate_model(
        n=int(_number(path, "n", *sec["n"])),
        d=int(_number(path, "d", *sec["d"])),
        u1=u1, u2=u2,
        lam=_number(path, "lambda", *sec["lambda"]) if "lambda" in sec else 1.0,
        gamma=_number(path, "gamma", *sec["gamma"]) if "gamma" in sec else 1.0,
        t1=_number(path, "t1", *sec["t1"]),
        tn=_number(path, "tn", *sec["tn"]),
    )

    sec = sections["integrator"]
    kwargs = {}
    if "h" in sec:
        kwargs["h"] = _number(path, "h", *sec["h"])
    if "scheme" in sec:
        kwargs["scheme"] = sec["scheme"][0]
    if "quadrature" in sec:
        kwargs["quadrature"] = sec["quadrature"][0]
    try:
        integrator = IntegratorConfig(**kwargs)
    except ValueError as exc:
        raise ParseError(path, 0, f"[integrator] {exc}")

    task = {}
    list_keys = {"alpha_grid", "w_grid", "energies", "bonds", "box"}
    for key, (value, lineno) in sections["task"].items():
        if key in list_keys:
            task[key] = _number_list(path, key, value, lineno)
        else:
            task[key] = _number(path, key, value, lineno)
    return RunConfig(model=model, integrator=integrator, task=task,
                     raw_text=text)


# ---------------------------------------------------------------------------
# Output plumbing.
# ---------------------------------------------------------------------------

def _format_cell(v):
    if isinstance(v, str):
        if any(c in v for c in ',"\n'):
            return '"' + v.replace('"', '""') + '"'
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_table(path, header, rows, preamble):
    """Write a CSV table atomically, preamble lines prefixed with '#'."""
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".",
                               prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            for line in preamble:
                fh.write(f"# {line}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_format_cell(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()[:16]


@dataclass
class RunManifest:
    subcommand: str
    config_digest: str
    seed: int
    version: str = __version__
    generator: str = GENERATOR_NAME
    wall_seconds: float = 0.0
    steps: int = 0
    outputs: list = field(default_factory=list)  # (path, digest) pairs

    def record(self):
        parts = [
            f"run={self.subcommand}",
            f"config={self.config_digest}",
            f"seed={self.seed}",
            f"generator={self.generator}",
            f"version={self.version}",
            f"wall={self.wall_seconds:.3f}",
            f"steps={self.steps}",
        ]
        for path, digest in self.outputs:
            parts.append(f"out={os.path.basename(path)}:{digest}")
        return " ".join(parts)


def _preamble(args, cfg, extra=()):
    m = cfg.model
    lines = [
        f"version {__version__}; generator {GENERATOR_NAME}",
        f"seed {args.seed}; config sha256[:16] {cfg.digest}",
        f"model n={m.n} d={m.d} k1={m.k1} k2={m.k2} lambda={m.lam} "
        f"gamma={m.gamma} t1={m.t1} tn={m.tn}",
        "alpha convention: e(alpha) = -lim (1/t) log E[exp(-alpha "
        "int sigma ds)]; units: energy per unit time",
    ]
    lines.extend(extra)
    return lines


# ---------------------------------------------------------------------------
# Subcommands.  Each returns (header, rows, preamble_extra, steps, status).
# ---------------------------------------------------------------------------

def _task_value(cfg, key, default=None):
    if key in cfg.task:
        return cfg.task[key]
    if default is None:
        raise ParseError("<config>", 0, f"[task] missing required key {key!r}")
    return default


def cmd_simulate(args, cfg):
    m = cfg.model
    t = float(_task_value(cfg, "t", 10.0))
    sample_every = int(_task_value(cfg, "sample_every", 10))
    rng = stream(args.seed, "simulate")
    res = integrate(m, np.zeros(m.dim), t, cfg.integrator, rng,
                    bonds=tuple(range(m.n + 1)), sample_every=sample_every)
    header = (["time"]
              + [f"p{j}" for j in range(m.n * m.d)]
              + [f"q{j}" for j in range(m.n * m.d)]
              + [f"r{j}" for j in range(2 * m.d)]
              + ["H"] + [f"phi{i}" for i in range(m.n + 1)])
    rows = []
    for tval, x in zip(res.sample_times, res.samples):
        flows = mdl.heat_flows(m, x)
        rows.append([tval, *x, float(mdl.chain_energy(m, x)), *flows])
    steps = int(round(t / cfg.integrator.h))
    return header, rows, [f"columns: time, state ({m.dim}), chain energy, "
                          f"heat flows (0..{m.n})"], steps, 0


def cmd_average(args, cfg):
    m = cfg.model
    t = float(_task_value(cfg, "t", 2000.0))
    burn_in = float(_task_value(cfg, "burn_in", 50.0))
    replicas = int(_task_value(cfg, "replicas", 8))

    rows = []
    for i in range(m.n + 1):
        mean, err = est.ergodic_average(
            m, lambda x, i=i: mdl.heat_flows(m, x)[..., i],
            t, burn_in, cfg.integrator, args.seed,
            replicas=replicas, task=f"average/flow{i}")
        rows.append([f"phi{i}", mean, err])
    for i in range(m.n + 1):
        mean, err = est.ergodic_average(
            m, lambda x, i=i: mdl.entropy_production(m, x, i),
            t, burn_in, cfg.integrator, args.seed,
            replicas=replicas, task=f"average/sigma{i}")
        rows.append([f"sigma{i}", mean, err])
    steps = int(round(t / cfg.integrator.h)) * replicas * 2 * (m.n + 1)
    extra = []
    if m.harmonic:
        extra.append(f"harmonic oracle: mean sigma = "
                     f"{orc.mean_entropy_production(m):.12g}")
    return ["observable", "mean", "stderr"], rows, extra, steps, 0


def cmd_cgf(args, cfg):
    m = cfg.model
    alphas = _task_value(cfg, "alpha_grid")
    t = float(_task_value(cfg, "t", 200.0))
    population = int(_task_value(cfg, "population", 1000))
    windows = int(_task_value(cfg, "windows", 0)) or None
    window = t / windows if windows else 1.0
    replicas = int(_task_value(cfg, "replicas", 4))
    burn_in = float(_task_value(cfg, "burn_in", 20.0))
    bond = int(_task_value(cfg, "bonds", [0])[0])

    def one(a):
        return est.cgf_cloning(
            m, bond, a, t, population, window, cfg.integrator, args.seed,
            replicas=replicas, burn_in=burn_in,
            task=f"cgf/bond{bond}/alpha{a:.6g}")

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        points = list(pool.map(one, alphas))
    rows = [[p.alpha, p.e, p.stderr, p.method, p.t, p.population]
            for p in points]
    steps = int(round((t + burn_in) / cfg.integrator.h)) * population \
        * replicas * len(alphas)
    return (["alpha", "e_hat", "stderr", "method", "t", "N"], rows,
            [f"bond index {bond}; window {window:g}; replicas {replicas}"],
            steps, 0)


def cmd_rate(args, cfg):
    m = cfg.model
    alphas = _task_value(cfg, "alpha_grid")
    w_grid = np.asarray(_task_value(cfg, "w_grid"), dtype=float)
    if not m.harmonic:
        raise ValueError("rate subcommand transforms the quadratic-model "
                         "oracle curve; use cgf + an external transform "
                         "for anharmonic chains")
    values = orc.riccati_curve(m, alphas)
    table = est.legendre_transform(alphas, values, w_grid)
    sym = np.empty_like(w_grid)
    for j, w in enumerate(w_grid):
        k = int(np.argmin(np.abs(w_grid + w)))
        sym[j] = (table.rate[j] - table.rate[k] + w
                  if abs(w_grid[k] + w) < 1e-12 else math.nan)
    rows = [[w, table.rate[j], table.alpha_star[j], sym[j]]
            for j, w in enumerate(w_grid)]
    return (["w", "I", "alpha_star", "symmetry"], rows,
            ["symmetry column: I(w) - I(-w) + w (nan if -w not on grid)"],
            0, 0)


def cmd_oracle(args, cfg):
    m = cfg.model
    alphas = _task_value(cfg, "alpha_grid")
    if not m.harmonic:
        raise ValueError("closed-form oracles require a quadratic model")
    rows = []
    for a in alphas:
        res = orc.riccati_cgf(m, a)
        rows.append([res.alpha, res.e, res.residual, res.closed_loop_margin])
    extra = [
        f"stationary mean entropy production {orc.mean_entropy_production(m):.12g}",
        f"admissible alpha interval {est.admissible_alpha_interval(m)}",
    ]
    return (["alpha", "e", "residual", "closed_loop_margin"], rows, extra,
            0, 0)


def cmd_check_identities(args, cfg):
    m = cfg.model
    tol = float(_task_value(cfg, "tolerance", 1e-6))
    samples = int(_task_value(cfg, "samples", 100))
    states = cal.sample_energy_ball(m, samples, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    fn = cal.gaussian_polynomial(
        rng.normal(size=m.dim), 0.2 * rng.normal(size=(m.dim, m.dim)), 0.15)
    bonds = sorted({0, 1, m.n})
    rows = []
    status = 0
    for alpha in (0.0, 0.3, 1.0):
        for i in bonds:
            worst = {"magic": 0.0, "conj": 0.0, "op": 0.0}
            for x in states:
                worst["magic"] = max(worst["magic"],
                                     abs(cal.check_identity_magic(m, x, i)))
                rc, ro = cal.check_identity_conj(m, x, i, alpha, fn)
                worst["conj"] = max(worst["conj"], rc)
                worst["op"] = max(worst["op"], ro)
            for name, resid in worst.items():
                ok = resid <= tol
                status = status if ok else 2
                rows.append([name, alpha, i, resid, "pass" if ok else "FAIL"])
    return (["identity", "alpha", "i", "max_residual", "status"], rows,
            [f"tolerance {tol:g}; {samples} states in the G <= 50 ball"],
            0, status)


def cmd_diagnose(args, cfg):
    m = cfg.model
    energies = _task_value(cfg, "energies", [50.0, 100.0, 200.0, 400.0])
    rows = []
    status = 0

    rep = dgn.tracking_scaling(m, energies, seed=args.seed)
    ok = abs(rep.slope - rep.expected_slope) <= 0.15 * abs(rep.expected_slope)
    status = status if ok else 2
    rows.append(["tracking_slope", rep.slope, rep.expected_slope,
                 "pass" if ok else "FAIL"])

    theta = float(_task_value(cfg, "theta", 0.4 / m.t_max))
    horizon = float(_task_value(cfg, "t", 2.0))
    try:
        lrep = dgn.liapunov_ratio(m, energies, theta, horizon,
                                  seed=args.seed)
        ok = 0.35 <= lrep.exponent <= 0.65 if m.k2 == 4 else lrep.exponent > 0
        status = status if ok else 2
        rows.append(["liapunov_exponent", lrep.exponent,
                     0.5 if m.k2 == 4 else float("nan"),
                     "pass" if ok else "FAIL"])
    except dgn.PreconditionError as exc:
        rows.append(["liapunov_exponent", math.nan, math.nan, f"FAIL: {exc}"])
        status = 2
    return (["diagnostic", "measured", "expected", "status"], rows,
            [f"shell energies {energies}"], 0, status)


COMMANDS = {
    "simulate": cmd_simulate,
    "average": cmd_average,
    "cgf": cmd_cgf,
    "rate": cmd_rate,
    "oracle": cmd_oracle,
    "check-identities": cmd_check_identities,
    "diagnose": cmd_diagnose,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="heatchain",
        description="Nonequilibrium oscillator chain: simulation, "
                    "current fluctuations and their oracles.")
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.monotonic()
    try:
        cfg = parse_config(args.config)
        header, rows, extra, steps, status = COMMANDS[args.subcommand](args, cfg)
    except (ParseError, mdl.ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, f"{args.subcommand}.csv")
    write_table(out_path, header, rows, _preamble(args, cfg, extra))
    manifest = RunManifest(
        subcommand=args.subcommand, config_digest=cfg.digest, seed=args.seed,
        wall_seconds=time.monotonic() - t0, steps=steps,
        outputs=[(out_path, _sha256_file(out_path))],
    )
    with open(os.path.join(args.out, "runs.log"), "a") as fh:
        fh.write(manifest.record() + "\n")
    if not args.quiet:
        print(manifest.record())
    return status


if __name__ == "__main__":
    sys.exit(main())
