"""Batch front end: ``dnmaps --spec run.txt --out results/``.

RunSpec format
--------------
UTF-8 text, one ``key = value`` per statement; ``;`` separates statements
on one line and ``#`` starts a comment.  ``[name]`` opens a section.

Top level::

    domain    = rectangle NX NY H | chain N H | mask H
    potential = 0 | EXPR | array V1 V2 ... | expr EXPR(x, y)
    command   = spectrum | maps | verify | sweep | friedlander
    seed      = 0

``[lambda]``      ``values = a, b, ...`` or ``from``/``to``/``steps`` (inclusive)
``[tolerances]``  ``tol`` (1e-10), ``zero_tol`` (1e-8, relative), ``identity_tol`` (1e-9)
``[output]``      ``dir`` (default ``out``; ``--out`` overrides)
``[verify]``      ``mu = a, b``, ``extend``, ``derivative``, ``corrupt = EPS``
``[mask]``        rows of ``0``/``1`` cells, first row at the top

Numbers may be written as arithmetic in ``pi`` (``4.5*pi**2``, ``1/64``);
complex λ use ``j`` (``1+2j``).  Potential expressions may also use
``x``, ``y`` and ``sin cos exp sqrt abs``.

Exit status is 0 when every check of the command passes, 1 when a check
fails and 2 for an invalid RunSpec.
"""

from __future__ import annotations

import argparse
import ast
import math
import operator
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import maps, verify
from . import relcore as rc
from . import serialize as ser
from .grid import (
    DiscreteModel,
    GridDomain,
    assemble,
    build_chain,
    build_masked,
    build_rectangle,
    node_potential,
)

THREADS_ENV = "DNMAPS_THREADS"
COMMANDS = ("spectrum", "maps", "verify", "sweep", "friedlander")


class RunSpecError(ValueError):
    """Invalid RunSpec; the message names the line/column or the field."""


# ---------------------------------------------------------------------------
# restricted arithmetic
# ---------------------------------------------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs}


def evaluate(text: str, variables: dict | None = None):
    """Evaluate arithmetic over numbers, ``pi``, whitelisted functions and ``variables``."""
    names = {"pi": math.pi, **(variables or {})}
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise RunSpecError(f"cannot parse expression {text.strip()!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            return node.value
        if isinstance(node, ast.Name) and node.id in names:
            return names[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and len(node.args) == 1
            and not node.keywords
        ):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise RunSpecError(f"disallowed element {ast.dump(node)[:40]!r} in expression {text.strip()!r}")

    return ev(tree)


def _real(text: str, what: str) -> float:
    v = evaluate(text)
    if isinstance(v, complex):
        raise RunSpecError(f"field {what!r}: expected a real number, got {text.strip()!r}")
    return float(v)


def _int(text: str, what: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise RunSpecError(f"field {what!r}: expected an integer, got {text.strip()!r}") from None


def _bool(text: str, what: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise RunSpecError(f"field {what!r}: expected true/false, got {text.strip()!r}")


# ---------------------------------------------------------------------------
# RunSpec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    domain: tuple
    command: str
    potential: tuple = ("const", 0.0)
    mask: tuple = ()
    lam_values: tuple = ()
    lam_range: tuple | None = None
    tol: float = rc.DEFAULT_TOL
    zero_tol: float = rc.KAPPA_REL_TOL
    identity_tol: float = rc.EQUAL_TOL
    out_dir: str = "out"
    seed: int = 0
    mu_values: tuple = ()
    extend: bool = True
    derivative: bool = True
    corrupt: float = 0.0

    @property
    def lambdas(self) -> list:
        if self.lam_range is not None:
            a, b, n = self.lam_range
            return [float(x) for x in np.linspace(a, b, n)] if n > 1 else [float(a)]
        return list(self.lam_values)


_KEYS = {
    "": {"domain", "potential", "command", "seed"},
    "lambda": {"values", "from", "to", "steps"},
    "tolerances": {"tol", "zero_tol", "identity_tol"},
    "output": {"dir"},
    "verify": {"mu", "extend", "derivative", "corrupt"},
}


def _statements(text: str):
    """Yield (section, key, value, line, column) and collect mask rows."""
    section = ""
    mask_rows = []
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise RunSpecError(f"line {lineno}, column {len(line.rstrip()) + 1}: unterminated section header")
            section = stripped[1:-1].strip().lower()
            if section not in _KEYS and section != "mask":
                col = line.index("[") + 2
                raise RunSpecError(f"line {lineno}, column {col}: unknown section [{section}]")
            continue
        if section == "mask":
            row = stripped.replace(" ", "")
            bad = [k for k, ch in enumerate(row) if ch not in "01"]
            if bad:
                col = line.index(stripped) + 1 + bad[0]
                raise RunSpecError(f"line {lineno}, column {col}: mask rows may contain only 0 and 1")
            mask_rows.append(row)
            continue
        offset = 0
        for part in line.split(";"):
            if part.strip():
                col = offset + len(part) - len(part.lstrip()) + 1
                if "=" not in part:
                    raise RunSpecError(f"line {lineno}, column {col}: expected key = value")
                key, value = part.split("=", 1)
                key = key.strip().lower()
                if key not in _KEYS[section]:
                    where = f"section [{section}]" if section else "top level"
                    raise RunSpecError(f"line {lineno}, column {col}: unknown key {key!r} at {where}")
                if not value.strip():
                    vcol = offset + len(key) + 2
                    raise RunSpecError(f"line {lineno}, column {vcol}: empty value for {key!r}")
                out.append((section, key, value.strip(), lineno, col))
            offset += len(part) + 1
    return out, mask_rows


def _parse_domain(value: str) -> tuple:
    parts = value.split()
    kind = parts[0].lower() if parts else ""
    if kind == "rectangle" and len(parts) == 4:
        nx, ny, h = _int(parts[1], "domain"), _int(parts[2], "domain"), _real(parts[3], "domain")
        return ("rectangle", nx, ny, h)
    if kind == "chain" and len(parts) == 3:
        return ("chain", _int(parts[1], "domain"), _real(parts[2], "domain"))
    if kind == "mask" and len(parts) == 2:
        return ("mask", _real(parts[1], "domain"))
    raise RunSpecError(f"field 'domain': expected 'rectangle NX NY H', 'chain N H' or 'mask H', got {value!r}")


def _parse_potential(value: str) -> tuple:
    head, _, rest = value.partition(" ")
    if head.lower() == "array":
        return ("array", tuple(_real(v, "potential") for v in rest.replace(",", " ").split()))
    if head.lower() == "expr":
        evaluate(rest, {"x": 0.5, "y": 0.5})  # syntax and whitelist check
        return ("expr", rest.strip())
    return ("const", _real(value, "potential"))


def _parse_values(value: str, what: str) -> tuple:
    out = []
    for item in value.split(","):
        v = evaluate(item)
        out.append(maps._scalar(v))
    if not out:
        raise RunSpecError(f"field {what!r}: empty list")
    return tuple(out)


def parse_runspec(text: str) -> RunSpec:
    """Parse and validate a RunSpec (see the module docstring for the format)."""
    stmts, mask_rows = _statements(text)
    seen = {}
    for section, key, value, line, col in stmts:
        name = f"{section}.{key}" if section else key
        if name in seen:
            raise RunSpecError(f"line {line}, column {col}: duplicate key {key!r}")
        seen[name] = value

    if "domain" not in seen:
        raise RunSpecError("field 'domain': missing")
    if "command" not in seen:
        raise RunSpecError("field 'command': missing")
    command = seen["command"].lower()
    if command not in COMMANDS:
        raise RunSpecError(f"field 'command': must be one of {', '.join(COMMANDS)}, got {seen['command']!r}")

    kw = {"domain": _parse_domain(seen["domain"]), "command": command}
    if kw["domain"][-1] <= 0:
        raise RunSpecError("field 'h': grid spacing must be positive")
    if kw["domain"][0] == "mask":
        if not mask_rows:
            raise RunSpecError("field 'mask': domain=mask needs a [mask] section")
        if len({len(r) for r in mask_rows}) != 1:
            raise RunSpecError("field 'mask': rows must have equal length")
        kw["mask"] = tuple(mask_rows)
    elif mask_rows:
        raise RunSpecError("field 'mask': [mask] section given for a non-mask domain")
    if "potential" in seen:
        kw["potential"] = _parse_potential(seen["potential"])
    if "seed" in seen:
        kw["seed"] = _int(seen["seed"], "seed")

    has_range = any(k in seen for k in ("lambda.from", "lambda.to", "lambda.steps"))
    if has_range and "lambda.values" in seen:
        raise RunSpecError("field 'lambda': give either values or from/to/steps, not both")
    if has_range:
        missing = [k for k in ("from", "to", "steps") if f"lambda.{k}" not in seen]
        if missing:
            raise RunSpecError(f"field {missing[0]!r}: missing in [lambda] range")
        lo, hi = _real(seen["lambda.from"], "from"), _real(seen["lambda.to"], "to")
        steps = _int(seen["lambda.steps"], "steps")
        if steps < 1:
            raise RunSpecError("field 'steps': must be >= 1")
        if lo > hi:
            raise RunSpecError("field 'from': must not exceed 'to'")
        kw["lam_range"] = (lo, hi, steps)
    if "lambda.values" in seen:
        kw["lam_values"] = _parse_values(seen["lambda.values"], "values")

    for key in ("tol", "zero_tol", "identity_tol"):
        if f"tolerances.{key}" in seen:
            v = _real(seen[f"tolerances.{key}"], key)
            if not v > 0:
                raise RunSpecError(f"field {key!r}: must be positive")
            kw[key] = v
    if "output.dir" in seen:
        kw["out_dir"] = seen["output.dir"]
    if "verify.mu" in seen:
        kw["mu_values"] = _parse_values(seen["verify.mu"], "mu")
    for key in ("extend", "derivative"):
        if f"verify.{key}" in seen:
            kw[key] = _bool(seen[f"verify.{key}"], key)
    if "verify.corrupt" in seen:
        kw["corrupt"] = _real(seen["verify.corrupt"], "corrupt")

    spec = RunSpec(**kw)
    needs_lambda = command in ("maps", "sweep", "friedlander")
    if needs_lambda and not spec.lambdas:
        raise RunSpecError(f"field 'lambda': command {command!r} needs λ values or a range")
    if command in ("sweep", "friedlander") and any(isinstance(z, complex) for z in spec.lambdas):
        raise RunSpecError(f"field 'values': command {command!r} takes real λ only")
    return spec


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


def build_domain(spec: RunSpec) -> GridDomain:
    kind = spec.domain[0]
    if kind == "rectangle":
        _, nx, ny, h = spec.domain
        return build_rectangle(nx, ny, h)
    if kind == "chain":
        _, n, h = spec.domain
        return build_chain(n, h)
    # mask rows are written top row first; cell (i, j) has j increasing upwards
    rows = [[int(c) for c in r] for r in spec.mask]
    cells = np.array(rows[::-1], dtype=bool).T
    return build_masked(cells, spec.domain[1])


def build_model(spec: RunSpec) -> DiscreteModel:
    domain = build_domain(spec)
    kind, value = spec.potential
    if kind == "const":
        V = value
    elif kind == "array":
        if len(value) != domain.n_nodes:
            raise RunSpecError(f"field 'potential': array has {len(value)} entries, domain has {domain.n_nodes} nodes")
        V = np.asarray(value, dtype=float)
    else:
        V = node_potential(domain, lambda x, y: evaluate(value, {"x": x, "y": y}))
    model = assemble(domain, V)
    if spec.corrupt:
        model = verify.corrupted(model, spec.corrupt)
    return model


def _is_zero_potential(spec: RunSpec) -> bool:
    kind, value = spec.potential
    return (kind == "const" and value == 0) or (kind == "array" and not any(value))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _pool_map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def cmd_spectrum(spec: RunSpec, out: Path, threads: int = 1) -> bool:
    model = build_model(spec)
    ed, en = model.dirichlet_eigenvalues, model.neumann_eigenvalues
    header = ["index", "dirichlet", "neumann"]
    oracle = None
    if spec.domain[0] == "rectangle" and _is_zero_potential(spec):
        _, nx, ny, h = spec.domain
        oracle = verify.analytic_grid_eigs(nx, ny, h)
        header += ["dirichlet_analytic", "relative_error"]
    rows = []
    for k in range(len(ed)):
        row = [k, ed[k], en[k]]
        if oracle is not None:
            row += [oracle[k], abs(ed[k] - oracle[k]) / max(abs(oracle[k]), 1e-300)]
        rows.append(row)
    ser.write_csv(out / "spectrum.csv", header, rows)
    return True


def _maps_record(model: DiscreteModel, lam, tol: float, zero_tol: float):
    b = maps.bundle(model, lam, tol=tol)
    rec = {
        "lam": lam,
        "sol_dim": b.sol_dim,
        "uc_defect": b.uc_defect,
        "violations": b.violations,
        "D": ser.relation_to_dict(b.D),
        "N": ser.relation_to_dict(b.N),
        "gamma_D": ser.relation_to_dict(b.gamma_D),
        "gamma_N": ser.relation_to_dict(b.gamma_N),
        "ker_AD": ser.subspace_to_dict(b.ker_AD),
        "ker_AN": ser.subspace_to_dict(b.ker_AN),
    }
    row = [lam, b.sol_dim, b.D.dom.dim, b.D.mul.dim, b.D.ker.dim, b.N.mul.dim]
    if not isinstance(lam, complex):
        spec_D = rc.eigen(b.D, check=False)
        z = zero_tol * max(1.0, float(np.max(np.abs(spec_D.eigenvalues)))) if len(spec_D.eigenvalues) else None
        rec["spectrum_D"] = ser.spectrum_to_dict(spec_D)
        row += [rc.kappa(spec_D, "-", z), rc.kappa(spec_D, "0", z)]
    else:
        row += ["", ""]
    row.append(b.ok)
    return rec, row, b.ok


def cmd_maps(spec: RunSpec, out: Path, threads: int = 1) -> bool:
    model = build_model(spec)
    lams = spec.lambdas
    results = _pool_map(lambda z: _maps_record(model, z, spec.tol, spec.zero_tol), lams, threads)
    ser.write_json(out / "maps.json", [r[0] for r in results])
    header = ["lam", "sol_dim", "dim_dom_D", "dim_mul_D", "dim_ker_D", "dim_mul_N", "kappa_minus_D", "kappa_zero_D", "ok"]
    ser.write_csv(out / "maps.csv", header, [r[1] for r in results])
    return all(r[2] for r in results)


def default_verify_lambda(model: DiscreteModel) -> float:
    """A generic real point: midway between the two lowest distinct eigenvalues."""
    pts = sorted(set(verify.spectral_points(np.concatenate([model.dirichlet_eigenvalues, model.neumann_eigenvalues]))))
    return 0.5 * (pts[0] + pts[1]) if len(pts) > 1 else pts[0] + 1.0


def cmd_verify(spec: RunSpec, out: Path, threads: int = 1) -> bool:
    model = build_model(spec)
    lams = spec.lambdas or [default_verify_lambda(model)]
    mus = list(spec.mu_values) or [lams[0]]
    reports = verify.run_identity_suite(
        model, lams, mus, tol=spec.identity_tol, extend=spec.extend,
        derivative=spec.derivative, workers=threads, rel_tol=spec.tol, seed=spec.seed,
    )
    ser.write_json(out / "reports.json", [r.to_dict() for r in reports])
    rows = [[r.name, ser.dumps(r.context).replace("\n", "").replace("  ", ""), r.residual, r.passed] for r in reports]
    ser.write_csv(out / "reports.csv", ["name", "context", "residual", "passed"], rows)
    summary = verify.summarize(reports)
    ser.write_json(out / "summary.json", summary)
    return summary["failed"] == 0


def _sweep_point(model: DiscreteModel, lam: float, tol: float, zero_tol: float):
    D = maps.dtn(model, lam, method="auto", tol=tol)
    s = rc.eigen(D, check=False)
    z = zero_tol * max(1.0, float(np.max(np.abs(s.eigenvalues)))) if len(s.eigenvalues) else None
    return lam, np.sort(s.eigenvalues), s.mul_dim, rc.kappa(s, "-", z), rc.kappa(s, "0", z)


def sweep_monotonicity(points, poles: np.ndarray, tol: float) -> dict:
    """Check that sorted D(λ) eigenvalues do not increase between consecutive poles."""
    worst = 0.0
    violations = []
    for (l0, e0, m0, *_), (l1, e1, m1, *_) in zip(points, points[1:]):
        if np.any((poles >= l0) & (poles <= l1)) or len(e0) != len(e1) or m0 or m1:
            continue
        scale = max(1.0, float(np.max(np.abs(e0))) if len(e0) else 1.0)
        rise = float(np.max(e1 - e0)) if len(e0) else 0.0
        worst = max(worst, rise / scale)
        if rise > tol * scale:
            violations.append({"from": l0, "to": l1, "rise": rise})
    return {"max_relative_rise": worst, "tolerance": tol, "violations": violations, "passed": not violations}


def cmd_sweep(spec: RunSpec, out: Path, threads: int = 1) -> bool:
    model = build_model(spec)
    lams = sorted(spec.lambdas)
    points = _pool_map(lambda z: _sweep_point(model, z, spec.tol, spec.zero_tol), lams, threads)
    points.sort(key=lambda p: p[0])
    rows = []
    for lam, eigs, mul_dim, km, k0 in points:
        if len(eigs) == 0:
            rows.append([lam, "", "", mul_dim, km, k0])
        for k, e in enumerate(eigs):
            rows.append([lam, k, e, mul_dim, km, k0])
    ser.write_csv(out / "sweep.csv", ["lam", "index", "eigenvalue", "dim_mul", "kappa_minus", "kappa_zero"], rows)
    lo, hi = lams[0], lams[-1]
    ed, en = model.dirichlet_eigenvalues, model.neumann_eigenvalues
    crossings = {
        "range": [lo, hi],
        "dirichlet": [float(x) for x in verify.spectral_points(ed[(ed >= lo) & (ed <= hi)])],
        "neumann": [float(x) for x in verify.spectral_points(en[(en >= lo) & (en <= hi)])],
    }
    ser.write_json(out / "crossings.json", crossings)
    check = sweep_monotonicity(points, ed, 1e-8)
    ser.write_json(out / "sweep_check.json", check)
    return check["passed"]


def cmd_friedlander(spec: RunSpec, out: Path, threads: int = 1) -> bool:
    model = build_model(spec)
    lams = sorted(spec.lambdas)
    counts = _pool_map(lambda z: verify.friedlander_count(model, z), lams, threads)
    header = ["lam", "kappa_minus_D", "kappa_minus_N", "count_AN_below", "count_AD_below",
              "count_difference", "kappa_bound", "zero_gap_D", "consistent"]
    rows = [[getattr(c, h) for h in header] for c in counts]
    ser.write_csv(out / "friedlander.csv", header, rows)
    return all(c.consistent for c in counts)


_DISPATCH = {
    "spectrum": cmd_spectrum,
    "maps": cmd_maps,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "friedlander": cmd_friedlander,
}


def run(spec: RunSpec, out: Path, threads: int = 1) -> int:
    out.mkdir(parents=True, exist_ok=True)
    ok = _DISPATCH[spec.command](spec, out, threads)
    return 0 if ok else 1


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dnmaps", description="Dirichlet-to-Neumann relations on lattice domains.")
    parser.add_argument("--spec", required=True, help="RunSpec file")
    parser.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    parser.add_argument("--seed", type=int, default=None, help="random seed (overrides the RunSpec)")
    parser.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    parser.add_argument("--tol", type=float, default=None, help="base rank tolerance (overrides [tolerances] tol)")
    parser.add_argument("--debug-corrupt", type=float, default=None, metavar="EPS",
                        help="perturb S asymmetrically by EPS (fault injection)")
    args = parser.parse_args(argv)

    try:
        text = Path(args.spec).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"dnmaps: cannot read {args.spec}: {exc.strerror}", file=sys.stderr)
        return 2
    try:
        spec = parse_runspec(text)
    except RunSpecError as exc:
        print(f"dnmaps: {args.spec}: {exc}", file=sys.stderr)
        return 2
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.tol is not None:
        updates["tol"] = args.tol
    if args.debug_corrupt is not None:
        updates["corrupt"] = args.debug_corrupt
    spec = replace(spec, **updates)
    threads = args.threads if args.threads is not None else _default_threads()
    out = Path(args.out if args.out is not None else spec.out_dir)
    try:
        return run(spec, out, max(1, threads))
    except OSError as exc:
        print(f"dnmaps: I/O error on {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2
    except (ValueError, RunSpecError) as exc:
        print(f"dnmaps: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
