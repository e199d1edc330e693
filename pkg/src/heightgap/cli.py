"""``heightgap`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from mpmath import mp

from . import config as C
from .config import ConfigError, RunConfig


def _json_list(text: str, what: str):
    try:
        v = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: not valid JSON ({exc.msg} at column {exc.colno})") from None
    return v


def _int_list(text: str, what: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated integers, got {text!r}") from None


def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heightgap", description="Heights, covolumes and generic elements for arithmetic lattices.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, spec=False):
        p.add_argument("--config", help="TOML run configuration; explicit flags take precedence")
        p.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
        p.add_argument("--output", "-o", help="write JSON here instead of stdout")
        p.add_argument("--precision", dest="precision_bits", type=int)
        p.add_argument("--no-cache", dest="cache", action="store_const", const=False)
        if spec:
            p.add_argument("--spec", help="lattice spec (TOML)")

    def matrices(p):
        p.add_argument("--input", help="JSON file with field and matrices")
        p.add_argument("--matrix", action="append", help="2x2 matrix as JSON, entries rational strings or coefficient vectors")
        p.add_argument("--field", help="field minpoly as a JSON list, low-to-high (default: Q)")

    p = sub.add_parser("height", help="height of a matrix or finite set of matrices")
    common(p)
    matrices(p)

    p = sub.add_parser("nheight", help="bracket for the normalized height")
    common(p)
    matrices(p)
    p.add_argument("--nmax", dest="n_max", type=int)
    p.add_argument("--eig-words", dest="eig_words", type=int)

    p = sub.add_parser("covol", help="covolume interval of the maximal lattice of a spec")
    common(p, spec=True)
    p.add_argument("--zeta-bound", dest="zeta_bound", type=int)

    p = sub.add_parser("generic-search", help="search a generic element among products of the generators")
    common(p, spec=True)
    p.add_argument("--nmax", dest="n_max", type=int)
    p.add_argument("--mode", choices=["direct", "squares", "double-commutator"])
    p.add_argument("--workers", type=int)
    p.add_argument("--budget", type=int)

    p = sub.add_parser("disc-decompose", help="split log|disc| of an algebraic number by modulus classes")
    common(p)
    p.add_argument("--minpoly", help="JSON list of integer coefficients, low-to-high")
    p.add_argument("--root", type=int, help="root index (real roots ascending, then upper half-plane); default: largest modulus")

    p = sub.add_parser("gap-check", help="height-gap check for one lattice spec")
    common(p, spec=True)
    p.add_argument("--nmax", dest="n_max", type=int)
    p.add_argument("--zeta-bound", dest="zeta_bound", type=int)
    p.add_argument("--eig-words", dest="eig_words", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("gap-scan", help="height-gap checks over Bianchi groups")
    common(p)
    p.add_argument("--bianchi", help="comma-separated squarefree D")
    p.add_argument("--nmax", dest="n_max", type=int)
    p.add_argument("--zeta-bound", dest="zeta_bound", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--csv", help="also write the table as CSV")

    p = sub.add_parser("margulis-scan", help="elements of small displacement and the group they generate")
    common(p, spec=True)
    p.add_argument("--eps", dest="epsilon", type=float)
    p.add_argument("--eps-grid", dest="eps_grid", help="comma-separated epsilons; 'default' for 0.05..1.0")
    p.add_argument("--radius", type=int)
    p.add_argument("--zeta-bound", dest="zeta_bound", type=int)

    p = sub.add_parser("zeta", help="Dedekind zeta value at 2 with a rigorous tail")
    common(p)
    p.add_argument("--minpoly", help="JSON list of integer coefficients, low-to-high")
    p.add_argument("--zeta-bound", dest="zeta_bound", type=int)

    p = sub.add_parser("mobius-inspect", help="types, lengths and Lorentz image of one element")
    common(p, spec=True)
    p.add_argument("--word", help="word in the spec generators (a, b, ...; uppercase = inverse)")
    p.add_argument("--matrix", action="append", help="explicit 2x2 matrix as JSON")
    return ap


_FLAG_KEYS = set(C.CONFIG_KEYS)


def flags_to_values(ns: argparse.Namespace) -> dict:
    vals = {}
    for k, v in vars(ns).items():
        if k in ("command", "config", "dump_config", "field") or v is None:
            continue
        if k == "matrix":
            vals["matrices"] = [_json_list(m, f"--matrix[{i}]") for i, m in enumerate(v)]
        elif k == "minpoly":
            vals["minpoly"] = _json_list(v, "--minpoly")
        elif k == "bianchi":
            vals["bianchi"] = _int_list(v, "--bianchi")
        elif k == "eps_grid":
            vals["eps_grid"] = None if v == "default" else _float_list(v, "--eps-grid")
            if v == "default":
                from .gaplab import EPS_GRID
                vals["eps_grid"] = list(EPS_GRID)
        elif k in _FLAG_KEYS:
            vals[k] = v
    if getattr(ns, "field", None) is not None:
        vals["minpoly"] = _json_list(ns.field, "--field")
    return vals


# dispatch ------------------------------------------------------------------------

def _field_from(cfg: RunConfig):
    from .nfield import NumberField

    mp_ = cfg.minpoly or [0, 1]
    return C.parse_field({"minpoly": mp_, "precision_bits": cfg.precision_bits}, "minpoly")


def _matrices(cfg: RunConfig):
    from .heights import MatrixOverK

    if cfg.input:
        p = Path(cfg.input)
        if not p.is_file():
            raise ConfigError(f"input file {cfg.input!r} does not exist")
        data = _json_list(p.read_text(), cfg.input)
        if isinstance(data, list):
            data = {"matrices": data}
        C._reject_unknown(data, {"format_version", "field", "matrices"}, cfg.input)
        K = C.parse_field({"precision_bits": cfg.precision_bits, **data.get("field", {"minpoly": [0, 1]})}, "field")
        mats = data.get("matrices", [])
    else:
        K = _field_from(cfg)
        mats = cfg.matrices or []
    if not mats:
        raise ConfigError("matrices: none given (use --matrix or --input)")
    return K, [MatrixOverK(K, C.parse_matrix(K, m, f"matrices[{i}]")) for i, m in enumerate(mats)]


def _spec(cfg: RunConfig):
    if not cfg.spec:
        raise ConfigError("spec: a lattice spec file is required (--spec)")
    return C.load_lattice_spec(cfg.spec, cfg.precision_bits)


def _f(x):
    return float(mp.nstr(x, 15))


def cmd_height(cfg):
    from .heights import height_matrix, height_set

    K, mats = _matrices(cfg)
    if len(mats) == 1:
        return height_matrix(mats[0]).to_json(), None, 0
    with mp.workprec(K.precision_bits):
        return {"total": _f(height_set(mats)), "size": len(mats), "field": K.to_json()}, None, 0


def cmd_nheight(cfg):
    from .heights import nheight_bounds

    K, mats = _matrices(cfg)
    res = nheight_bounds(mats, cfg.n_max, cfg.eig_words).to_json()
    res["field"] = K.to_json()
    return res, None, 2 if res["truncated"] else 0


def cmd_covol(cfg):
    from .qalg import max_lattice_covolume

    spec = _spec(cfg)
    rep = max_lattice_covolume(spec.algebra, spec.S, cfg.zeta_bound, spec.index_hint)
    return {"lattice": spec.name, "algebra": spec.algebra.to_json(), "covolume": rep.to_json()}, None, 0


def cmd_generic_search(cfg):
    from .generic import search_generic

    spec = _spec(cfg)
    res = search_generic(list(spec.generators), cfg.n_max, mode=cfg.mode, workers=cfg.workers, budget=cfg.budget)
    return {"lattice": spec.name, "search": res.to_json()}, None, 2 if res.truncated else 0


def cmd_disc_decompose(cfg):
    from .generic import discriminant_decomposition
    from .heights import AlgebraicNumber

    if not cfg.minpoly:
        raise ConfigError("minpoly: required for disc-decompose")
    try:
        root = cfg.root
        if root is None:
            probe = AlgebraicNumber(cfg.minpoly, 0, cfg.precision_bits)
            mods = [abs(b.center) for b in probe.balls]
            root = max(range(len(mods)), key=lambda i: (mods[i], -i))
        alpha = AlgebraicNumber(cfg.minpoly, root, cfg.precision_bits)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"minpoly: {exc}") from None
    return discriminant_decomposition(alpha).to_json(), None, 0


def cmd_gap_check(cfg):
    from .gaplab import gap_check

    spec = _spec(cfg)
    rep = gap_check(spec, cfg.n_max, cfg.zeta_bound, cfg.eig_words, cfg.budget, cfg.workers)
    out = rep.to_json()
    return out, None, 2 if rep.verdict == "inconclusive" else 0


def cmd_gap_scan(cfg):
    from .gaplab import gap_scan

    scan = gap_scan(cfg.bianchi or [], cfg.n_max, cfg.zeta_bound, cfg.workers)
    verdicts = [r.get("verdict") for r in scan.rows]
    code = 0
    if verdicts and all(v == "error" for v in verdicts):
        code = 1
    elif verdicts and all(v in ("inconclusive", "error") for v in verdicts):
        code = 2
    return scan.to_json(), scan.to_csv(), code


def cmd_margulis_scan(cfg):
    from .gaplab import is_monotone, margulis_grid

    spec = _spec(cfg)
    grid = cfg.eps_grid or [cfg.epsilon]
    reps = margulis_grid(spec, grid, word_radius=cfg.radius, zeta_bound=cfg.zeta_bound)
    if len(reps) == 1:
        return reps[0].to_json(), None, 0
    return {"lattice": spec.name, "grid": [r.to_json() for r in reps], "monotone": is_monotone(reps)}, None, 0


def cmd_zeta(cfg):
    from .nfield import zeta2

    K = _field_from(cfg)
    z = zeta2(K, cfg.zeta_bound)
    return {
        "field": K.to_json(),
        "prime_bound": z.prime_bound,
        "lower": mp.nstr(z.value, 17),
        "upper": mp.nstr(z.upper, 17),
    }, None, 0


def cmd_mobius_inspect(cfg):
    from .generic import Word, word_eval
    from .gaplab import _alphabet
    from .mobius import (
        BasePoint, classify_all, displacement, eigenvalue, is_generic, lorentz_residual, phi_embed,
        translation_length,
    )

    spec = _spec(cfg)
    amb = spec.algebra.ambient
    K = amb.field
    if cfg.word is not None:
        names = _alphabet(len(spec.generators))
        try:
            w = Word.parse(cfg.word, names)
        except ValueError as exc:
            raise ConfigError(f"word: {exc}") from None
        g = word_eval(w, *spec.generators)
    elif cfg.matrices:
        g = amb.element(C.parse_matrix(K, cfg.matrices[0], "matrices[0]"))
    else:
        raise ConfigError("mobius-inspect needs --word or --matrix")
    with mp.workprec(K.precision_bits):
        out = {
            "element": g.to_json(),
            "types": classify_all(g),
            "genericity": is_generic(g).to_json(),
            "translation_length": translation_length(g).to_json(),
            "displacement_from_center": _f(displacement(g, BasePoint.center(amb.signature))),
            "lorentz": [[_f(x) for x in row] for row in phi_embed(g).tolist()],
            "lorentz_residual": _f(lorentz_residual(g)),
        }
        try:
            a = eigenvalue(g)
            out["eigenvalue_minpoly"] = list(a.minpoly)
        except ValueError as exc:
            out["eigenvalue_minpoly"] = None
            out["eigenvalue_note"] = str(exc)
    return out, None, 0


COMMAND_FUNCS = {
    "height": cmd_height,
    "nheight": cmd_nheight,
    "covol": cmd_covol,
    "generic-search": cmd_generic_search,
    "disc-decompose": cmd_disc_decompose,
    "gap-check": cmd_gap_check,
    "gap-scan": cmd_gap_scan,
    "margulis-scan": cmd_margulis_scan,
    "zeta": cmd_zeta,
    "mobius-inspect": cmd_mobius_inspect,
}


def render(command: str, result: dict) -> str:
    doc = {"format_version": C.FORMAT_VERSION, "command": command, "result": result}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def run(cfg: RunConfig) -> tuple[int, str, str | None]:
    """Execute a resolved config; returns ``(exit code, json text, csv text)``."""
    key = C.cache_key(cfg) if cfg.cache else None
    if key:
        hit = C.cache_get(key)
        if hit is not None:
            return hit.get("exit_code", 0), hit["json"], hit.get("csv")
    result, csv_text, code = COMMAND_FUNCS[cfg.command](cfg)
    text = render(cfg.command, result)
    if key:
        C.cache_put(key, text, csv_text, code)
    return code, text, csv_text


def _origin(exc: BaseException) -> str:
    """Innermost heightgap module on the traceback."""
    mod = "heightgap"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("heightgap."):
            mod = name.split(".", 1)[1]
        tb = tb.tb_next
    return mod


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        file_values = C.load_config_file(ns.config) if ns.config else {}
        cfg, warnings = C.resolve(ns.command, file_values, flags_to_values(ns))
        for w in warnings:
            print(f"heightgap: warning: {w}", file=sys.stderr)
        if ns.dump_config:
            sys.stdout.write(cfg.to_toml())
            return 0
        code, text, csv_text = run(cfg)
    except ConfigError as exc:
        print(f"heightgap: config: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # module errors keep their origin in the message
        mod = _origin(exc)
        print(f"heightgap: {mod}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    if csv_text is not None and cfg.csv:
        Path(cfg.csv).write_text(csv_text)
    return code


if __name__ == "__main__":
    sys.exit(main())
