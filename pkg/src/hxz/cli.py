"""Command line front end.

Every subcommand reads a JSON spec, runs one pipeline at the requested
precision and writes its artifacts (JSON, JSON-lines, CSV and optional SVG)
into the output directory.  Each artifact carries the run configuration and a
SHA-256 hash of its own content, so reruns can be compared byte for byte.

Exit codes: 0 success, 2 invalid input, 3 precision failure, 4 numerical
failure.  Failures also leave an ``error.json`` diagnostic behind.
"""

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

import gmpy2
import numpy as np

from . import __version__
from .errors import HxzError, InvalidInputError, PrecisionError
from .numcore import DEFAULT_PRECISION, RationalFunction, to_pair, workprec

N_SOFT_LIMIT = 500
EXIT_OK, EXIT_INPUT, EXIT_PRECISION, EXIT_NUMERICAL = 0, 2, 3, 4
MPC, MPFR = type(gmpy2.mpc(0)), type(gmpy2.mpfr(0))

# tolerance overrides accepted through --tol key=value
TOLERANCES = {
    "oracle_rel_tol": float,
    "identity_rel_tol": float,
    "margin_tol": float,
    "atom_radius": float,
    "corridor_width": float,
    "int_tol": float,
    "reject_tol": float,
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    command: str
    spec_path: str = None
    n: int = None
    precision_bits: int = DEFAULT_PRECISION
    output_dir: str = "out"
    svg: bool = False
    tolerances: dict = dataclasses.field(default_factory=dict)
    options: dict = dataclasses.field(default_factory=dict)
    allow_large_n: bool = False
    refine_digits: int = None  # opt-in precision doubling until results agree

    def to_json(self):
        return {"command": self.command, "spec_path": self.spec_path, "n": self.n,
                "precision_bits": self.precision_bits, "svg": self.svg,
                "tolerances": dict(sorted(self.tolerances.items())),
                "options": dict(sorted(self.options.items())),
                "refine_digits": self.refine_digits, "version": __version__}


# serialization ---------------------------------------------------------------

def jsonable(obj):
    """Plain JSON value for the numeric types used across the package."""
    if isinstance(obj, MPC):
        return to_pair(obj)
    if isinstance(obj, MPFR):
        return to_pair(gmpy2.mpc(obj))[0]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [jsonable(x) for x in obj.tolist()]
    if hasattr(obj, "to_json"):
        return jsonable(obj.to_json())
    if dataclasses.is_dataclass(obj):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(x) for x in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False)


def content_hash(text):
    return hashlib.sha256(text.encode()).hexdigest()


class Artifacts:
    """Writes artifacts into the output directory and remembers their paths."""

    def __init__(self, config, directory=None):
        self.config = config
        self.dir = Path(directory or config.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.paths = []
        self.payloads = {}  # name -> plain data, used for precision agreement

    def _write(self, name, text):
        path = self.dir / name
        path.write_text(text)
        self.paths.append(str(path))
        return path

    def json(self, name, result):
        self.payloads[name] = jsonable(result)
        body = _dumps(self.payloads[name])
        doc = {"config": self.config.to_json(), "content_hash": content_hash(body),
               "result": json.loads(body)}
        return self._write(name, _dumps(doc) + "\n")

    def jsonl(self, name, rows):
        self.payloads[name] = jsonable(rows)
        lines = [json.dumps(r, sort_keys=True) for r in self.payloads[name]]
        body = "\n".join(lines)
        head = json.dumps({"config": self.config.to_json(), "content_hash": content_hash(body)},
                          sort_keys=True)
        return self._write(name, "\n".join([head] + lines) + "\n")

    def csv(self, name, header, rows):
        self.payloads[name] = [dict(zip(header, r)) for r in rows]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        body = buf.getvalue()
        head = (f"# config: {json.dumps(self.config.to_json(), sort_keys=True)}\n"
                f"# content_hash: {content_hash(body)}\n")
        return self._write(name, head + body)

    def svg_path(self, name):
        path = self.dir / name
        self.paths.append(str(path))
        return path


# pipelines ------------------------------------------------------------------

def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path} is not valid JSON: {exc}") from None


def _structure(cfg):
    from .hyperfunc import HyperExpSpec, analyze

    spec = HyperExpSpec.from_json(_load_json(cfg.spec_path))
    return analyze(spec)


def _need_n(cfg, default=None):
    n = cfg.n if cfg.n is not None else default
    if n is None:
        raise InvalidInputError(f"{cfg.command} needs --n")
    return n


def _site_kinds(sd):
    return [s.kind for s in sd.sites]


def cmd_analyze(cfg, out):
    sd = _structure(cfg)
    out.json("analyze.json", sd)


def cmd_derive(cfg, out):
    from .derivseq import b_sequence, check_degree_law, check_local_identities

    sd = _structure(cfg)
    seq = b_sequence(sd, _need_n(cfg, 20))
    out.jsonl("derive.jsonl", seq.to_rows())
    law = check_degree_law(seq)
    ident = check_local_identities(seq, cfg.tolerances.get("identity_rel_tol", 1e-25))
    out.json("derive_report.json", {
        "degree_law_ok": all(r.ok for r in law),
        "degree_law": [{"n": r.n, "deg": r.deg, "deg_expected": r.deg_expected,
                        "rel_residual": r.rel_residual, "ok": r.ok} for r in law],
        "identities_ok": ident.ok,
        "identities_max_rel_residual": ident.max_rel_residual,
    })
    if cfg.svg:
        from .figures import plot_degree_law
        plot_degree_law(law, out.svg_path("degree_law.svg"))


def _zeros_of(sd, n):
    from .derivseq import b_sequence
    from .roots import find_roots

    seq = b_sequence(sd, n)
    B = seq.B[n]
    if B.degree < 1:
        return seq, None, []
    rs = find_roots(B)
    rows = []
    for r, k in zip(rs.roots, rs.multiplicities):
        scale = B.eval_abs(r)
        res = float(abs(B(r)) / scale) if scale > 0 else 0.0
        rows.append((n, float(r.real), float(r.imag), k, res))
    rows.sort(key=lambda r: (r[1], r[2]))
    return seq, rs, rows


def cmd_zeros(cfg, out):
    sd = _structure(cfg)
    n = _need_n(cfg, 20)
    _, _, rows = _zeros_of(sd, n)
    out.csv("zeros.csv", ["n", "re", "im", "multiplicity", "residual"], rows)


def cmd_voronoi(cfg, out):
    from .voronoi import build_diagram, limit_measure

    sd = _structure(cfg)
    diagram = build_diagram(sd.sites)
    lim = limit_measure(sd, diagram)
    out.json("voronoi.json", {
        "sites": [{"index": k, "location": [p.real, p.imag], "kind": s.kind}
                  for k, (p, s) in enumerate(zip(diagram.points, sd.sites))],
        "limit_measure": lim,
    })
    zs = None
    if cfg.n is not None:
        _, _, rows = _zeros_of(sd, cfg.n)
        zs = [complex(r[1], r[2]) for r in rows for _ in range(r[3])]
    if cfg.svg:
        from .figures import plot_voronoi
        title = f"zeros of B_{cfg.n}" if zs is not None else None
        plot_voronoi(diagram, lim, _site_kinds(sd), out.svg_path("voronoi.svg"), zs, title)


def cmd_compare(cfg, out):
    from .roots import empirical_measure
    from .voronoi import build_diagram, compare_measures, limit_measure

    sd = _structure(cfg)
    n = _need_n(cfg, 30)
    diagram = build_diagram(sd.sites)
    lim = limit_measure(sd, diagram)
    seq, rs, rows = _zeros_of(sd, n)
    if rs is None:
        raise InvalidInputError(f"B_{n} is constant; nothing to compare")
    emp = empirical_measure(rs, seq.B[n].degree)
    cmp = compare_measures(emp, lim, diagram, n,
                           atom_radius=cfg.tolerances.get("atom_radius"),
                           corridor_width=cfg.tolerances.get("corridor_width"))
    out.json("compare.json", {"n": n, "degree": seq.B[n].degree, "comparison": cmp,
                              "limit_measure": lim})
    out.csv("zeros.csv", ["n", "re", "im", "multiplicity", "residual"], rows)
    if cfg.svg:
        from .figures import plot_voronoi
        zs = [complex(r[1], r[2]) for r in rows for _ in range(r[3])]
        plot_voronoi(diagram, lim, _site_kinds(sd), out.svg_path("compare.svg"), zs,
                     f"zeros of B_{n} and the limiting edge density")


def _parse_complex(text):
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise InvalidInputError(f"cannot parse complex number {text!r}") from None
    if len(parts) == 1:
        parts.append(0.0)
    if len(parts) != 2:
        raise InvalidInputError(f"expected 're,im', got {text!r}")
    return complex(*parts)


def cmd_predict(cfg, out):
    from .asympt import classify, predict

    sd = _structure(cfg)
    n = _need_n(cfg)
    i = int(cfg.options.get("site", 0))
    if not 0 <= i < len(sd.sites):
        raise InvalidInputError(f"site index {i} out of range")
    z = gmpy2.mpc(_parse_complex(cfg.options["z"]))
    rep = predict(sd, i, z, n)
    out.json("predict.json", {"site": i, "z": z, "n": n, "cell": classify(sd, i), "report": rep})


def cmd_l1rate(cfg, out):
    from .asympt import l1_rate_experiment

    sd = _structure(cfg)
    i = int(cfg.options.get("site", 0))
    try:
        rect = tuple(float(x) for x in cfg.options["rect"].split(","))
        n_list = tuple(int(x) for x in cfg.options["n_list"].split(","))
    except ValueError:
        raise InvalidInputError("--rect and --n-list take comma separated numbers") from None
    if len(rect) != 4:
        raise InvalidInputError("--rect needs x0,x1,y0,y1")
    for n in n_list:
        _guard_n(cfg, n)
    rep = l1_rate_experiment(sd, i, rect, n_list, grid=int(cfg.options.get("grid", 40)))
    out.csv("l1rate.csv", ["n", "estimate"], list(zip(rep.n_list, rep.estimates)))
    out.json("l1rate.json", rep)
    if cfg.svg:
        from .figures import plot_l1rate
        plot_l1rate(rep, out.svg_path("l1rate.svg"))


def cmd_localmodel(cfg, out):
    from .localmodels import ks_distance, micro_limit, ord0, rescaled_empirical, sheffer_seq

    alpha = int(cfg.options["alpha"])
    m = int(cfg.options["m"])
    n = _need_n(cfg)
    lam = cfg.options.get("lambda")
    bits = cfg.options.get("zero_bits")
    fam = sheffer_seq(alpha, m, n)
    emp = rescaled_empirical(alpha, m, n, bits=bits)
    limit = micro_limit(m)
    x = emp.locations
    ks = ks_distance(x.real, limit.cdf, emp.weights)
    result = {
        "alpha": alpha, "m": m, "n": n,
        "coefficients": [str(c) for c in fam[n]],
        "ord0": ord0(alpha, m, n),
        "c_m": limit.c_m,
        "ks": ks,
        "support": [float(x.real.min()), float(x.real.max())],
        "max_abs_imag": float(np.abs(x.imag).max()),
    }
    out.csv("localmodel_zeros.csv", ["zeta_re", "zeta_im", "weight"],
            [(float(z.real), float(z.imag), float(w)) for z, w in emp.atoms])
    if lam is not None:
        pushed = rescaled_empirical(alpha, m, n, lam=_parse_complex(lam), bits=bits)
        result["lambda"] = _parse_complex(lam)
        result["pushforward_atoms"] = len(pushed.atoms)
        out.csv("localmodel_pushforward.csv", ["w_re", "w_im", "weight"],
                [(float(z.real), float(z.imag), float(w)) for z, w in pushed.atoms])
    out.json("localmodel.json", result)
    if cfg.svg:
        from .figures import plot_local_model
        plot_local_model(x.real, emp.weights, limit, out.svg_path("localmodel.svg"),
                         f"alpha={alpha}, m={m}, n={n}, KS={ks:.4f}")


def cmd_reconstruct(cfg, out):
    from .hyperfunc import HyperExpSpec, log_derivative, reconstruct_from_log_derivative

    data = _load_json(cfg.spec_path)
    if all(k in data for k in "PQST"):
        r = log_derivative(HyperExpSpec.from_json(data))
    elif "num" in data and "den" in data:
        r = RationalFunction.from_json(data).reduce()
    else:
        raise InvalidInputError("expected a spec (P, Q, S, T) or a rational function (num, den)")
    kw = {k: cfg.tolerances[k] for k in ("int_tol", "reject_tol") if k in cfg.tolerances}
    exponents, H = reconstruct_from_log_derivative(r, **kw)
    out.json("reconstruct.json", {
        "exponents": [{"pole": a, "exponent": k} for a, k in exponents],
        "H": H,
    })


HANDLERS = {
    "analyze": cmd_analyze, "derive": cmd_derive, "zeros": cmd_zeros,
    "voronoi": cmd_voronoi, "predict": cmd_predict, "l1rate": cmd_l1rate,
    "compare": cmd_compare, "localmodel": cmd_localmodel, "reconstruct": cmd_reconstruct,
}


# configuration and dispatch --------------------------------------------------

def _guard_n(cfg, n):
    if n < 0:
        raise InvalidInputError("n must be nonnegative")
    if n > N_SOFT_LIMIT and not cfg.allow_large_n:
        raise InvalidInputError(f"n = {n} exceeds the soft limit {N_SOFT_LIMIT}; pass --allow-large-n")


def _resolve_precision(flag, spec_path):
    """--precision-bits, then HXZ_PRECISION_BITS, then precision_bits in the input file, then the default."""
    if flag is not None:
        return int(flag)
    env = os.environ.get("HXZ_PRECISION_BITS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InvalidInputError(f"HXZ_PRECISION_BITS={env!r} is not an integer") from None
    if spec_path:
        try:
            with open(spec_path) as fh:
                data = json.load(fh)
            if isinstance(data, dict) and "precision_bits" in data:
                return int(data["precision_bits"])
        except (OSError, ValueError):
            pass  # reported properly when the pipeline loads the input
    return DEFAULT_PRECISION


def _parse_tolerances(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or key not in TOLERANCES:
            raise InvalidInputError(
                f"bad --tol {item!r}; known keys: {', '.join(sorted(TOLERANCES))}")
        try:
            out[key] = TOLERANCES[key](value)
        except ValueError:
            raise InvalidInputError(f"bad value in --tol {item!r}") from None
    return out


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hxz",
        description="Zeros of iterated derivatives of (P/Q) exp(S/T): structure, "
                    "asymptotics, Voronoi limit laws and local models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True, n_default=None):
        if spec:
            p.add_argument("spec", help="JSON spec file")
        p.add_argument("--n", type=int, default=n_default, help="derivative order / degree")
        p.add_argument("--precision-bits", type=int, default=None,
                       help="working precision (default: HXZ_PRECISION_BITS, then the input file)")
        p.add_argument("-o", "--output-dir", default="out", help="artifact directory (default: out)")
        p.add_argument("--svg", action="store_true", help="also render SVG figures")
        p.add_argument("--tol", action="append", metavar="KEY=VALUE", help="tolerance override")
        p.add_argument("--allow-large-n", action="store_true", help=f"lift the n <= {N_SOFT_LIMIT} guard")
        p.add_argument("--refine", type=int, metavar="DIGITS", default=None,
                       help="rerun at doubled precision until results agree to DIGITS digits")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    common(sub.add_parser("analyze", help="structural data of a spec"))
    common(sub.add_parser("derive", help="B_n sequence with degree-law checks"), n_default=20)
    common(sub.add_parser("zeros", help="zeros of B_n as CSV"), n_default=20)
    common(sub.add_parser("voronoi", help="Voronoi diagram and limit measure"))
    common(sub.add_parser("compare", help="zeros of B_n against the limit measure"), n_default=30)
    p = common(sub.add_parser("predict", help="cellwise asymptotic prediction"))
    p.add_argument("--site", type=int, default=0)
    p.add_argument("--z", required=True, help="evaluation point re,im")
    p = common(sub.add_parser("l1rate", help="L1 rate experiment on a rectangle"))
    p.add_argument("--site", type=int, default=0)
    p.add_argument("--rect", required=True, help="x0,x1,y0,y1")
    p.add_argument("--n-list", default="16,32,64,128")
    p.add_argument("--grid", type=int, default=40)
    p = common(sub.add_parser("localmodel", help="reduced local model and its microscopic limit"), spec=False)
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--lambda", dest="lam", default=None, help="re,im for the z-scale pushforward")
    common(sub.add_parser("reconstruct", help="recover (R, H) from a logarithmic derivative"))
    return parser


def config_from_args(args):
    spec_path = getattr(args, "spec", None)
    options = {}
    for key in ("site", "z", "rect", "n_list", "grid", "alpha", "m"):
        if getattr(args, key, None) is not None:
            options[key] = getattr(args, key)
    if getattr(args, "lam", None) is not None:
        options["lambda"] = args.lam
    bits = _resolve_precision(args.precision_bits, spec_path)
    if args.command == "localmodel" and (args.precision_bits is not None or os.environ.get("HXZ_PRECISION_BITS")):
        options["zero_bits"] = bits
    return RunConfig(command=args.command, spec_path=spec_path, n=args.n, precision_bits=bits,
                     output_dir=args.output_dir, svg=args.svg,
                     tolerances=_parse_tolerances(args.tol), options=options,
                     allow_large_n=args.allow_large_n, refine_digits=args.refine)


def _exit_code(exc):
    if isinstance(exc, InvalidInputError):
        return EXIT_INPUT
    if isinstance(exc, PrecisionError):
        return EXIT_PRECISION
    return EXIT_NUMERICAL


def _number(x):
    if isinstance(x, bool):
        return None
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        # decimal strings carry more digits than a float holds
        try:
            return gmpy2.mpfr(x, 8192)
        except ValueError:
            return None
    return None


def _agree(a, b, tol, key="", floor=0):
    """Numeric leaves agree to relative ``tol``; residual-type fields are skipped.

    Values below ``floor`` in both runs are rounding noise around an exact zero.
    """
    if "residual" in key or "hash" in key:
        return True
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_agree(a[k], b[k], tol, str(k), floor) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return False
        pair = [_number(x) for x in a + b]
        if len(a) == 2 and None not in pair:
            # a complex pair: compare as one number
            za, zb = gmpy2.mpc(pair[0], pair[1]), gmpy2.mpc(pair[2], pair[3])
            return abs(za - zb) <= tol * max(abs(za), abs(zb)) or max(abs(za), abs(zb)) <= floor
        return all(_agree(x, y, tol, key, floor) for x, y in zip(a, b))
    na, nb = _number(a), _number(b)
    if na is not None and nb is not None:
        return (abs(na - nb) <= tol * max(abs(na), abs(nb)) or na == nb
                or max(abs(na), abs(nb)) <= floor)
    return a == b


def _run_refined(cfg):
    """Double the precision until two successive runs report the same numbers."""
    tol = 10.0 ** (-cfg.refine_digits)
    bits = cfg.precision_bits
    prev = None
    while True:
        step = dataclasses.replace(cfg, precision_bits=bits)
        tmp = tempfile.mkdtemp(prefix="hxz-")
        out = Artifacts(step, tmp)
        with workprec(bits):
            HANDLERS[cfg.command](step, out)
        floor = gmpy2.mpfr(2) ** (-(bits // 4))
        if prev is not None and _agree(prev[1].payloads, out.payloads, tol, floor=floor):
            shutil.rmtree(prev[0], ignore_errors=True)
            dest = Path(cfg.output_dir)
            dest.mkdir(parents=True, exist_ok=True)
            paths = []
            for p in out.paths:
                target = dest / Path(p).name
                shutil.move(p, target)
                paths.append(str(target))
            shutil.rmtree(tmp, ignore_errors=True)
            return paths
        if prev is not None:
            shutil.rmtree(prev[0], ignore_errors=True)
        prev = (tmp, out)
        bits *= 2
        if bits > 4096:
            shutil.rmtree(tmp, ignore_errors=True)
            raise PrecisionError(f"results did not agree to {cfg.refine_digits} digits below 4096 bits")


def run(cfg):
    """Run one configured pipeline; returns (exit status, artifact paths)."""
    try:
        if not 64 <= cfg.precision_bits <= 4096:
            raise InvalidInputError(f"precision_bits must lie in [64, 4096], got {cfg.precision_bits}")
        if cfg.n is not None:
            _guard_n(cfg, cfg.n)
        if cfg.refine_digits is not None:
            return EXIT_OK, _run_refined(cfg)
        out = Artifacts(cfg)
        with workprec(cfg.precision_bits):
            HANDLERS[cfg.command](cfg, out)
        return EXIT_OK, out.paths
    except (HxzError, ZeroDivisionError, OverflowError) as exc:
        code = _exit_code(exc)
        diag = {"command": cfg.command, "exit_code": code, "error": type(exc).__name__,
                "message": str(exc), "config": cfg.to_json()}
        path = Path(cfg.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / "error.json").write_text(_dumps(diag) + "\n")
        print(json.dumps(diag, sort_keys=True), file=sys.stderr)
        return code, [str(path / "error.json")]


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except InvalidInputError as exc:
        print(json.dumps({"command": args.command, "exit_code": EXIT_INPUT,
                          "error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_INPUT
    code, paths = run(cfg)
    if code == EXIT_OK:
        print(json.dumps({"status": "ok", "artifacts": paths}))
    return code


if __name__ == "__main__":
    sys.exit(main())
