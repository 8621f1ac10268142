"""Command line interface: ``treepiece train|tokenize|detokenize|stats|oov-rate``.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import statistics
import sys
from collections import Counter

import numpy as np

from .errors import AssemblyError, OovSkeleton, ParseErrorAtLine, SkeletonTooLarge, TreePieceError
from .io import load_vocab, read_corpus, save_vocab
from .lattice import DEFAULT_MAX_NODES, SubtreeLattice
from .trainer import LatticeCache, TrainConfig, em_train, expand_vocab, generate_vocabulary, init_vocab
from .tree import PLACEHOLDER_TOKEN, parse_unit, serialize_top
from .units import assemble

OOV = "<OOV>"
EXIT_USAGE = 1
EXIT_DATA = 2

log = logging.getLogger("treepiece")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    value = os.environ.get("TREEPIECE_SEED")
    if not value:
        return 0
    try:
        return int(value)
    except ValueError:
        sys.stderr.write(f"treepiece: error: TREEPIECE_SEED must be an integer, got {value!r}\n")
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treepiece", description="Subtree tokenizer for semantic-parse skeletons.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def corpus_args(p, required=True):
        p.add_argument("--corpus", "--input", dest="corpus", required=required,
                       help="input file ('-' for stdin)" if not required else "corpus TSV file")
        p.add_argument("--columns", type=int, choices=(1, 2, 3))
        p.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")
        p.add_argument("--decouple", action="store_true", help="drop raw tokens directly under intents")

    p = sub.add_parser("train", help="learn a vocabulary from a corpus")
    corpus_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--merges", type=int, default=600)
    p.add_argument("--em-iters", type=int, default=30)
    p.add_argument("--em-eps", type=float, default=0.01)
    p.add_argument("--expand-samples", type=int, default=10)
    p.add_argument("--expand-theta", type=float, default=0.15)
    p.add_argument("--no-expand", action="store_true")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--max-nodes", type=int, default=DEFAULT_MAX_NODES)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("tokenize", help="split skeletons into vocabulary units")
    corpus_args(p, required=False)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out")
    p.add_argument("--mode", choices=("viterbi", "sample"), default="viterbi")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--max-nodes", type=int, default=DEFAULT_MAX_NODES)

    p = sub.add_parser("detokenize", help="assemble unit lines back into skeletons")
    p.add_argument("--corpus", "--input", dest="corpus")
    p.add_argument("--out")

    for name, help_text in (("stats", "units-per-skeleton statistics"), ("oov-rate", "share of uncoverable skeletons")):
        p = sub.add_parser(name, help=help_text)
        corpus_args(p)
        p.add_argument("--vocab", required=True)
        p.add_argument("--max-nodes", type=int, default=DEFAULT_MAX_NODES)
    return parser


@contextlib.contextmanager
def _open_in(path):
    if path in (None, "-"):
        yield sys.stdin
    else:
        with open(path, encoding="utf-8") as f:
            yield f


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            yield f


def _read_corpus(args):
    with _open_in(args.corpus) as f:
        return read_corpus(f, lenient=args.lenient, columns=args.columns, decouple=args.decouple)


def cmd_train(args, out) -> None:
    corpus = _read_corpus(args)
    config = TrainConfig(
        num_merges=args.merges,
        em_max_iters=args.em_iters,
        em_epsilon=args.em_eps,
        expand_samples=args.expand_samples,
        expand_theta=args.expand_theta,
        seed=args.seed,
        max_nodes=args.max_nodes,
        n_jobs=args.jobs,
    )
    print(f"skeletons: {len(corpus)}", file=out)
    print(f"initial units: {len(init_vocab(corpus))}", file=out)
    vocab = generate_vocabulary(corpus, config)
    print(f"after merges: {len(vocab)}", file=out)
    vocab, trace = em_train(corpus, vocab, config)
    for i, ll in enumerate(trace.log_likelihoods):
        print(f"em iteration {i}: log-likelihood {ll:.6f}", file=out)
    print(f"em stop: {trace.stop_reason.value} after {trace.iterations} iteration(s)", file=out)
    if not args.no_expand:
        vocab = expand_vocab(corpus, vocab, config)
        print(f"after expansion: {len(vocab)}", file=out)
    save_vocab(vocab, args.out)
    print(f"wrote {args.out} ({len(vocab)} units, {vocab.phase.value})", file=out)


def _tokenize_all(skeletons, vocab, max_nodes, mode="viterbi", theta=1.0, seed=0):
    """Tokenization result per skeleton, ``None`` where it is OOV."""
    cache = LatticeCache(max_nodes)
    results = []
    for i, skeleton in enumerate(skeletons):
        try:
            lattice: SubtreeLattice = cache.get(skeleton)
            if mode == "viterbi":
                results.append(lattice.viterbi_tokenize(vocab))
            else:
                sampler = lattice.sampler(vocab, theta)
                results.append(sampler.draw(np.random.default_rng((seed, i))))
        except OovSkeleton:
            results.append(None)
        except SkeletonTooLarge as exc:
            log.warning("skeleton %d treated as OOV: %s", i, exc)
            results.append(None)
    return results


def cmd_tokenize(args, out) -> None:
    vocab = load_vocab(args.vocab)
    corpus = _read_corpus(args)
    results = _tokenize_all(corpus.skeletons, vocab, args.max_nodes, args.mode, args.theta, args.seed)
    with _open_out(args.out) as f:
        for r in results:
            f.write((OOV if r is None else "\t".join(r.partition.canonical())) + "\n")


def cmd_detokenize(args, out) -> None:
    lines = []
    with _open_in(args.corpus) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if line.strip() == OOV:
                lines.append(OOV)
                continue
            try:
                units = [parse_unit(u) for u in line.split("\t")]
                lines.append(serialize_top(assemble(units)))
            except (AssemblyError, TreePieceError) as exc:
                raise ParseErrorAtLine(lineno, f"{type(exc).__name__}: {exc}") from exc
    with _open_out(args.out) as f:
        for line in lines:
            f.write(line + "\n")


def unit_stats(skeletons, vocab, max_nodes=DEFAULT_MAX_NODES) -> dict:
    results = _tokenize_all(skeletons, vocab, max_nodes)
    per_skeleton = [len(r.partition) for r in results if r is not None]
    sizes: Counter[int] = Counter()
    for r in results:
        if r is not None:
            sizes.update(u.node_count for u in r.units)
    with_ph = sum(1 for k in vocab.freq if PLACEHOLDER_TOKEN in k)
    return {
        "skeletons": len(skeletons),
        "oov": len(results) - len(per_skeleton),
        "mean_units": statistics.fmean(per_skeleton) if per_skeleton else 0.0,
        "median_units": statistics.median(per_skeleton) if per_skeleton else 0,
        "max_units": max(per_skeleton, default=0),
        "vocab_size": len(vocab),
        "vocab_phase": vocab.phase.value,
        "vocab_with_placeholders": with_ph,
        "vocab_without_placeholders": len(vocab) - with_ph,
        "unit_size_histogram": dict(sorted(sizes.items())),
    }


def cmd_stats(args, out) -> None:
    vocab = load_vocab(args.vocab)
    corpus = _read_corpus(args)
    s = unit_stats(corpus.skeletons, vocab, args.max_nodes)
    print(f"skeletons: {s['skeletons']}", file=out)
    print(f"oov: {s['oov']}", file=out)
    print(f"units per skeleton: mean {s['mean_units']:.3f} median {s['median_units']} max {s['max_units']}", file=out)
    print(
        f"vocabulary: {s['vocab_size']} units, phase {s['vocab_phase']} "
        f"({s['vocab_with_placeholders']} with placeholders, {s['vocab_without_placeholders']} without)",
        file=out,
    )
    print("unit size histogram (nodes: count):", file=out)
    for size, count in s["unit_size_histogram"].items():
        print(f"  {size}: {count}", file=out)


def oov_rate(skeletons, vocab, max_nodes=DEFAULT_MAX_NODES) -> tuple[int, float]:
    results = _tokenize_all(skeletons, vocab, max_nodes)
    n_oov = sum(1 for r in results if r is None)
    return n_oov, 100.0 * n_oov / len(results)


def cmd_oov_rate(args, out) -> None:
    vocab = load_vocab(args.vocab)
    corpus = _read_corpus(args)
    n_oov, pct = oov_rate(corpus.skeletons, vocab, args.max_nodes)
    print(f"oov: {n_oov}/{len(corpus)} ({pct:.3f}%)", file=out)


COMMANDS = {
    "train": cmd_train,
    "tokenize": cmd_tokenize,
    "detokenize": cmd_detokenize,
    "stats": cmd_stats,
    "oov-rate": cmd_oov_rate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, sys.stdout)
    except (TreePieceError, OSError, ValueError) as exc:
        print(f"treepiece {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
