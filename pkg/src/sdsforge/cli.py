"""Command line pipeline: params -> orbits -> gen -> match -> certify, plus verify.

Exit codes: 0 success, 1 no match in the shard range, 2 verification failure,
3 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .blocks import generate_candidates, read_kv, read_label_line, read_multiplicities, write_block_files, write_kv
from .certificates import NAMES, bundled
from .hadamard import (
    MAGIC,
    SdsCertificate,
    hadamard_from_blocks,
    load_certificate,
    read_binary,
    read_pm,
    verify_hadamard,
    verify_sds,
    verify_skew_hadamard,
    write_binary,
    write_pm,
)
from .matcher import MatchProblem, match
from .params import ParameterSet, all_parameter_sets, four_squares_decompositions, orbit_feasible
from .zmod import orbit_table, subgroup_closure, sym_class_table

EXIT_OK, EXIT_NO_MATCH, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _four(text, name) -> tuple[int, ...]:
    vals = _ints(text)
    if len(vals) == 1:
        vals = vals * 4
    if len(vals) != 4:
        raise ConfigError(f"{name} needs one or four values, got {text!r}")
    return vals


def _range(text) -> tuple[int, int] | None:
    if text in (None, "", "all"):
        return None
    if isinstance(text, tuple):
        return text
    lo, sep, hi = str(text).partition("..")
    if not sep:
        raise ConfigError(f"shard range must look like lo..hi, got {text!r}")
    return int(lo), int(hi)


@dataclass(frozen=True)
class RunConfig:
    v: int = 0
    H: tuple[int, ...] = ()
    k: tuple[int, ...] = ()
    skew_block: int = 0
    budgets: tuple[int, ...] = (1000,) * 4
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    mode: str = "sample"
    shards: int = 1
    shard_range: tuple[int, int] | None = None
    workers: int = 1
    hash_seed: int = 0
    first: bool = False
    out: str = "run"

    @property
    def lam(self) -> int:
        return sum(self.k) - self.v

    def validate_matching(self) -> RunConfig:
        if self.shards < 1 or self.shards & (self.shards - 1):
            raise ConfigError("shards must be a power of two")
        if self.shard_range and not 0 <= self.shard_range[0] < self.shard_range[1] <= self.shards:
            raise ConfigError(f"shard range {self.shard_range} outside 0..{self.shards}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        return self

    def validate(self) -> RunConfig:
        if self.v < 3 or self.v % 2 == 0:
            raise ConfigError("v must be an odd integer >= 3")
        if len(self.k) != 4:
            raise ConfigError("k needs four block sizes")
        try:
            ParameterSet(self.v, self.k, self.lam)
        except ValueError as exc:
            raise ConfigError(f"k={self.k} is not an SDS parameter set: {exc}") from None
        if self.lam <= 0:
            raise ConfigError("lambda = sum(k) - v must be positive")
        if not 0 <= self.skew_block <= 4:
            raise ConfigError("skew_block is 1..4, or 0 for none")
        if self.mode not in ("sample", "walk"):
            raise ConfigError("mode is 'sample' or 'walk'")
        return self.validate_matching()

    def items(self) -> dict:
        d = asdict(self)
        out = {}
        for key, value in d.items():
            if key == "shard_range":
                value = "all" if value is None else f"{value[0]}..{value[1]}"
            elif isinstance(value, (tuple, list)):
                value = ",".join(map(str, value))
            elif isinstance(value, bool):
                value = int(value)
            out[key] = value
        return out


_PARSERS = {
    "v": int,
    "H": _ints,
    "k": _ints,
    "skew_block": int,
    "budgets": lambda t: _four(t, "budgets"),
    "seeds": lambda t: _four(t, "seeds"),
    "mode": str,
    "shards": int,
    "shard_range": _range,
    "workers": int,
    "hash_seed": int,
    "first": lambda t: str(t).lower() in ("1", "true", "yes", "on"),
    "out": str,
}
_ALIASES = {"budget": "budgets", "seed": "seeds", "M": "shards"}
# written into gen.manifest for the record; ignored when a manifest is reused as a config
_RECORDED = {"lambda", "n", "blocks", "sdsforge", "numpy", "numba"}


def load_config(path: str | None, overrides: dict, manifest: str | None = None) -> RunConfig:
    """File values, then ``overrides``; ``manifest`` supplies a base of recorded keys."""
    raw: dict = {}
    if manifest:
        raw.update({k: v for k, v in read_kv(manifest).items() if k in _PARSERS})
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} does not exist")
        raw.update({k: v for k, v in read_kv(path).items() if k not in _RECORDED})
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "SDSFORGE_WORKERS" in os.environ and overrides.get("workers") is None:
        raw["workers"] = os.environ["SDSFORGE_WORKERS"]
    values = {}
    for key, text in raw.items():
        key = _ALIASES.get(key, key)
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = _PARSERS[key](text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None
    return RunConfig(**values)


def _versions() -> dict:
    import numba

    return {"sdsforge": __version__, "numpy": np.__version__, "numba": numba.__version__}


def _file_plan(cfg: RunConfig) -> list[tuple[str, int, bool, int, int]]:
    """(prefix, k, skew, budget, seed) per block; equal (k, skew) share a file pair."""
    plan, seen = [], {}
    for i, k in enumerate(cfg.k):
        skew = cfg.skew_block == i + 1
        key = (k, skew)
        if key not in seen:
            seen[key] = (f"k{k}{'s' if skew else ''}", k, skew, cfg.budgets[i], cfg.seeds[i])
        plan.append(seen[key])
    return plan


# --- subcommands ----------------------------------------------------------------


def cmd_params(args) -> int:
    decomps = four_squares_decompositions(args.v, bounded=not args.all)
    print(f"# decompositions of 4*{args.v} = {4 * args.v} into four odd squares (n1 >= n2 >= n3 >= n4)")
    for d in decomps:
        flag = "" if d.bounded else "  (n1 >= v/2)"
        print(f"# {','.join(map(str, d.n))}{flag}")
    print("# v;k1,k2,k3,k4;lambda;signs;n1,n2,n3,n4")
    for p in all_parameter_sets(args.v, bounded=not args.all):
        line = p.format()
        if args.H:
            table = orbit_table(subgroup_closure(args.v, _ints(args.H)))
            line += ";feasible" if orbit_feasible(p, table).feasible else ";infeasible"
        print(line)
    return EXIT_OK


def cmd_orbits(args) -> int:
    H = subgroup_closure(args.v, _ints(args.H))
    table = orbit_table(H)
    print(f"# v={args.v} H={','.join(map(str, H.elements))} |H|={H.order} nontrivial orbits={table.nontrivial_count}")
    sys.stdout.write(table.format())
    if args.classes:
        classes = sym_class_table(H)
        print(f"# +/- difference classes: n={classes.class_count}")
        for c in classes.classes:
            print(f"{c.label}: {' '.join(map(str, c.members))}")
    return EXIT_OK


def cmd_gen(cfg: RunConfig) -> int:
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    H = subgroup_closure(cfg.v, cfg.H)
    table, classes = orbit_table(H), sym_class_table(H)
    feas = orbit_feasible(cfg.k, table)
    if not feas.feasible:
        raise ConfigError(f"block sizes {cfg.k} are not unions of H-orbits: {feas.per_block}")
    plan = _file_plan(cfg)
    done = set()
    for prefix, k, skew, budget, seed in plan:
        if prefix in done:
            continue
        done.add(prefix)
        t0 = time.perf_counter()
        cands = generate_candidates(table, k, skew, budget, seed, mode=cfg.mode)
        meta = write_block_files(out / prefix, cands, classes,
                                 {"k": k, "skew": int(skew), "mode": cfg.mode, "budget": budget, "seed": seed})
        print(f"{prefix}: {meta['count']} candidates, n={meta['n']} ({time.perf_counter() - t0:.1f}s)")
    manifest = {**cfg.items(), "lambda": cfg.lam, "n": classes.class_count,
                "blocks": ",".join(p[0] for p in plan), **_versions()}
    write_kv(out / "gen.manifest", manifest)
    return EXIT_OK


def _load_run(out: Path):
    gen = read_kv(out / "gen.manifest")
    prefixes = gen["blocks"].split(",")
    n = int(gen["n"])
    arrays: dict[str, np.ndarray] = {}
    metas = {}
    for prefix in prefixes:
        if prefix not in arrays:
            metas[prefix] = read_kv(out / f"{prefix}.meta")
            arrays[prefix] = read_multiplicities(out / f"{prefix}.Fp", n)
    if len({m["classes"] for m in metas.values()}) > 1:
        raise ConfigError("block files were built over different class orders")
    return gen, prefixes, arrays


def cmd_match(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    if not (out / "gen.manifest").exists():
        raise ConfigError(f"{out}/gen.manifest not found; run 'gen' first")
    gen, prefixes, arrays = _load_run(out)
    lam = int(gen["lambda"])
    problem = MatchProblem.from_lists([arrays[p] for p in prefixes], lam, n=int(gen["n"]))
    shards = range(*cfg.shard_range) if cfg.shard_range else None
    run = match(problem, cfg.shards, shards, cfg.hash_seed, cfg.first, cfg.workers)
    with open(out / "matches.txt", "w") as fh:
        fh.write("# l1 l2 l3 l4 status (1-based line numbers into the block files)\n")
        for r in run.results:
            fh.write(f"{' '.join(map(str, r.lines))} {'verified' if r.verified else 'rejected'}\n")
    manifest = {"files": ",".join(prefixes), "sizes": ",".join(map(str, problem.sizes)),
                "lambda": lam, "n": problem.n, **run.manifest(), **_versions()}
    write_kv(out / "match.manifest", manifest)
    tot = run.totals()
    print(f"{len(run.results)} verified match(es); {tot['pairs_inserted']} pairs stored, "
          f"{tot['pairs_probed']} probed, {tot['collisions']} hash collisions; "
          f"{run.elapsed:.2f}s with {run.workers} worker(s)")
    for r in run.results[:10]:
        print(" ".join(map(str, r.lines)))
    return EXIT_OK if run.results else EXIT_NO_MATCH


def _read_matches(path: Path) -> list[tuple[int, ...]]:
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            parts = line.split()
            rows.append(tuple(int(x) for x in parts[:4]))
    return rows


def cmd_certify(cfg: RunConfig, which: int = 1, lines: tuple[int, ...] | None = None) -> int:
    out = Path(cfg.out)
    gen = read_kv(out / "gen.manifest")
    prefixes = gen["blocks"].split(",")
    if lines is None:
        matches = _read_matches(out / "matches.txt")
        if len(matches) < which:
            print(f"no match #{which} in {out / 'matches.txt'}", file=sys.stderr)
            return EXIT_NO_MATCH
        lines = matches[which - 1]
    v, gens = int(gen["v"]), _ints(gen["H"])
    index_sets = tuple(read_label_line(out / f"{p}.F", ln) for p, ln in zip(prefixes, lines))
    k = _ints(gen["k"])
    cert = SdsCertificate(v, gens, k, int(gen["lambda"]), index_sets, name=out.name,
                          notes=(f"from lines {' '.join(map(str, lines))} of {','.join(prefixes)}",))
    report = verify_sds(cert)
    (out / "sds.cert").write_text(cert.format())
    (out / "certify.txt").write_text(report.format())
    if not report.passed:
        sys.stdout.write(report.format())
        return EXIT_VERIFY
    Hm = hadamard_from_blocks(v, cert.blocks())
    ok = verify_hadamard(Hm)
    skew = report.skew_block is not None
    skew_ok = verify_skew_hadamard(Hm) if skew else False
    write_pm(out / "hadamard.txt", Hm)
    write_binary(out / "hadamard.bin", Hm)
    pos = report.skew_block + 1 if skew else "none"
    summary = f"order {Hm.shape[0]}: Hadamard {ok}; skew block {pos}; skew-Hadamard {skew_ok}\n"
    with open(out / "certify.txt", "a") as fh:
        fh.write(summary)
    sys.stdout.write(report.format() + summary)
    return EXIT_OK if ok and (skew_ok or not skew) else EXIT_VERIFY


def cmd_verify(args) -> int:
    if args.bundled:
        cert = bundled(args.bundled)
        return _verify_cert(cert)
    path = args.path
    with open(path, "rb") as fh:
        head = fh.read(16)
    if head[:8] == MAGIC:
        return _verify_matrix(read_binary(path))
    if head.lstrip()[:1] in (b"+", b"-"):
        return _verify_matrix(read_pm(path))
    return _verify_cert(load_certificate(path))


def _verify_cert(cert: SdsCertificate) -> int:
    report = verify_sds(cert)
    sys.stdout.write(report.format())
    if not report.passed:
        return EXIT_VERIFY
    Hm = hadamard_from_blocks(cert.v, cert.blocks())
    ok = verify_hadamard(Hm)
    print(f"Goethals-Seidel order {Hm.shape[0]}: Hadamard {ok}", end="")
    if report.skew_block is not None:
        print(f"; skew-Hadamard {verify_skew_hadamard(Hm)}", end="")
    print()
    return EXIT_OK if ok else EXIT_VERIFY


def _verify_matrix(Hm) -> int:
    ok = verify_hadamard(Hm)
    skew = verify_skew_hadamard(Hm) if ok else False
    print(f"order {Hm.shape[0]}: Hadamard {ok}; skew-Hadamard {skew}")
    return EXIT_OK if ok else EXIT_VERIFY


# --- argument parsing -----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p, match_flags=False):
    p.add_argument("--config", help="key=value run configuration file")
    p.add_argument("--out", help="run directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    if match_flags:
        p.add_argument("--shards", type=int, help="shard modulus M (power of two)")
        p.add_argument("--shard-range", help="process shards lo..hi (hi exclusive)")
        p.add_argument("--workers", type=int, help="worker threads (env SDSFORGE_WORKERS)")
        p.add_argument("--seed", type=int, help="hash coefficient seed")
        p.add_argument("--first", action="store_true", default=None, help="stop after the first verified match")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdsforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("params", help="four-odd-squares decompositions and SDS parameter sets")
    p.add_argument("v", type=int)
    p.add_argument("--all", action="store_true", help="include decompositions with n1 >= v/2")
    p.add_argument("--H", help="subgroup generators; adds an orbit feasibility column")

    p = sub.add_parser("orbits", help="print the H-orbits of Z_v")
    p.add_argument("v", type=int)
    p.add_argument("--H", required=True, help="subgroup generators, comma separated")
    p.add_argument("--classes", action="store_true", help="also print the +/- difference classes")

    _add_run_flags(sub.add_parser("gen", help="write candidate block files F/F' per block size"))
    _add_run_flags(sub.add_parser("match", help="find four F' lines summing to (lambda, ...)"), match_flags=True)
    p = sub.add_parser("certify", help="build and verify the SDS and Hadamard matrix of a match")
    _add_run_flags(p)
    p.add_argument("--match", type=int, default=1, help="which match to certify (1-based)")
    p.add_argument("--lines", help="explicit l1,l2,l3,l4 instead of matches.txt")

    p = sub.add_parser("verify", help="check a certificate or matrix file")
    p.add_argument("path", nargs="?")
    p.add_argument("--bundled", choices=NAMES, help="verify a published certificate shipped with the package")
    return parser


def _config_from(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for name in ("out", "shards", "shard_range", "workers", "first"):
        if getattr(args, name, None) is not None:
            overrides[name] = getattr(args, name)
    if getattr(args, "seed", None) is not None:
        overrides["hash_seed"] = args.seed
    manifest = None
    if args.command != "gen" and not args.config and args.out:
        candidate = Path(args.out) / "gen.manifest"
        manifest = str(candidate) if candidate.exists() else None
    return load_config(args.config, overrides, manifest)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "params":
            return cmd_params(args)
        if args.command == "orbits":
            return cmd_orbits(args)
        if args.command == "verify":
            if not args.path and not args.bundled:
                raise ConfigError("verify needs a path or --bundled NAME")
            return cmd_verify(args)
        cfg = _config_from(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "match":
            return cmd_match(cfg.validate_matching())
        if args.command == "certify":
            lines = _ints(args.lines) if args.lines else None
            if lines is not None and len(lines) != 4:
                raise ConfigError("--lines needs four line numbers")
            return cmd_certify(cfg, args.match, lines)
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"sdsforge: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
