"""Command line: synth, featurize, train, decode, eval, rf (and lm).

Every command reads an optional JSON config (``--config``) whose keys are
the fields of :class:`RunConfig`; explicit flags override the file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from . import ink
from .ctc import greedy_decode
from .decoder import DecodeConfig, beam_search
from .evaluate import format_report
from .experiment import DeskTask, featurize, lm_corpus, make_lines
from .langmodel import load_arpa, save_arpa, train_ngram
from .netgraph import (
    ConfigurationError,
    TrainConfig,
    desk_arch,
    fcrn_arch,
    forward,
    load_checkpoint,
    micro_arch,
    output_shape,
    receptive_field,
    save_checkpoint,
    spatial_part,
    train,
)
from .netgraph.arch import SPATIAL
from .pathsig import rasterize, signature_dim, write_pgm

log = logging.getLogger("inkscribe")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 2017
    alphabet_size: int = 10
    sig_level: int = 2
    arch: str = "desk"
    height: int = 128
    window_radius: int = 4
    n_train: int = 2000
    n_valid: int = 200
    n_test: int = 200
    corpus_chars: int = 100_000
    source_order: int = 2
    iterations: int = 500
    batch_size: int = 8
    lm_order: int = 3
    threshold: float = 0.001
    beam: int = 32
    lm_weight: float = 1.0
    length_bonus: float = 0.0

    def task(self) -> DeskTask:
        return DeskTask(self.alphabet_size, self.n_train, self.n_valid, self.n_test,
                        source_order=self.source_order, corpus_chars=self.corpus_chars,
                        height=self.height, window_radius=self.window_radius, seed=self.seed)

    def decode_config(self) -> DecodeConfig:
        return DecodeConfig(self.threshold, self.beam, self.lm_weight, self.length_bonus)

    def text(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:16]


PRESETS = {
    "desk": {},
    "micro": dict(n_train=24, n_valid=4, n_test=8, corpus_chars=2000, iterations=30, batch_size=4),
}

_FLAG_FIELDS = {"seed": "seed", "sig_level": "sig_level", "lm_weight": "lm_weight", "beam": "beam",
                "threshold": "threshold", "preset_arch": "arch"}


def build_config(args) -> RunConfig:
    values: dict = dict(PRESETS[args.preset])
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        data = json.loads(path.read_text(encoding="utf-8"))
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(data)
    for attr, name in _FLAG_FIELDS.items():
        v = getattr(args, attr, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig(**values)
    if not 0 <= cfg.sig_level <= 3:
        raise UsageError("--sig-level must be in 0..3")
    return cfg


def _arch_for(cfg: RunConfig, n_classes: int):
    if cfg.arch == "desk":
        return desk_arch(n_classes)
    if cfg.arch == "full":
        return fcrn_arch(n_classes)
    if cfg.arch == "micro":
        return micro_arch(n_classes)
    raise UsageError(f"unknown architecture {cfg.arch!r}")


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# --- commands ---------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    task = cfg.task()
    for split in ("train", "valid", "test"):
        ink.save_ink(make_lines(task, split), out / f"{split}.ink")
    ink.save_corpus(lm_corpus(task), out / "corpus.txt")
    print(f"wrote {out}/{{train,valid,test}}.ink and corpus.txt")


def cmd_featurize(cfg: RunConfig, args) -> None:
    samples = ink.load_ink(_require(args.ink, "ink file"))
    if not 0 <= args.index < len(samples):
        raise UsageError(f"sample index {args.index} out of range ({len(samples)} samples)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fm = rasterize(samples[args.index], cfg.sig_level, cfg.window_radius, cfg.height)
    for c in range(fm.channels):
        write_pgm(fm.values[c], out / f"sample{args.index}_ch{c:02d}.pgm")
    print(f"wrote {fm.channels} channel maps ({fm.height}x{fm.width}) to {out}")


def cmd_train(cfg: RunConfig, args) -> None:
    alphabet = ink.Alphabet.default(cfg.alphabet_size)
    samples = ink.load_ink(_require(args.ink, "ink file"), alphabet)
    if not samples:
        raise UsageError("training file has no samples")
    arch = _arch_for(cfg, alphabet.size_with_blank)
    task = cfg.task()
    data = featurize(samples, cfg.sig_level, task, arch)
    tcfg = TrainConfig(iterations=cfg.iterations, batch_size=cfg.batch_size, seed=cfg.seed, log_every=0)
    res = train(data, arch, tcfg)
    meta = {"sig_level": str(cfg.sig_level), "height": str(cfg.height),
            "window_radius": str(cfg.window_radius), "alphabet": " ".join(alphabet.symbols),
            "config": cfg.digest()}
    save_checkpoint(res.params, args.model, meta)
    log_text = "".join(f"{i + 1} {loss!r}\n" for i, loss in enumerate(res.losses))
    _atomic_write(Path(args.model) / "loss.txt", log_text)
    status = "diverged" if res.diverged else "done"
    print(f"training {status}: {len(res.losses)} iterations, final loss {res.losses[-1]:.4f}")


def cmd_decode(cfg: RunConfig, args) -> None:
    model_dir = Path(args.model)
    if not (model_dir / "manifest.txt").is_file():
        raise UsageError(f"no checkpoint at {model_dir}")
    params, meta = load_checkpoint(model_dir)
    level = int(meta.get("sig_level", cfg.sig_level))
    if args.sig_level is not None and args.sig_level != level:
        raise UsageError(f"--sig-level {args.sig_level} conflicts with the checkpoint's level {level}")
    if signature_dim(level) != params.in_channels:
        raise UsageError("checkpoint input channels do not match its signature level")
    alphabet = ink.Alphabet(tuple(meta["alphabet"].split())) if "alphabet" in meta else \
        ink.Alphabet.default(cfg.alphabet_size)
    samples = ink.load_ink(_require(args.ink, "ink file"), alphabet)
    lm = load_arpa(_require(args.lm, "language model")) if args.lm else None
    task = replace(cfg.task(), height=int(meta.get("height", cfg.height)),
                   window_radius=int(meta.get("window_radius", cfg.window_radius)))
    data = featurize(samples, level, task, params.arch)
    dcfg = cfg.decode_config()
    lines = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        for ex in data:
            post = forward(params, ex.dense(), "eval")[0]
            labels = beam_search(post, lm, dcfg, alphabet.symbols) if lm else greedy_decode(post)
            lines.append(" ".join(alphabet.decode(labels)))
    fallbacks = sum("too large to enumerate" in str(w.message) for w in caught)
    if fallbacks:
        log.warning("%d regions exceeded the enumeration cap and were searched with a beam", fallbacks)
    _atomic_write(args.out, "".join(line + "\n" for line in lines))
    print(f"decoded {len(lines)} lines to {args.out}")


def cmd_eval(cfg: RunConfig, args) -> None:
    refs = [s.label for s in ink.load_ink(_require(args.ref, "reference ink file"))]
    hyp_lines = _require(args.hyp, "hypothesis file").read_text(encoding="utf-8").splitlines()
    if len(hyp_lines) != len(refs):
        raise UsageError(f"{len(hyp_lines)} hypotheses for {len(refs)} references")
    pairs = [(r, tuple(h.split())) for r, h in zip(refs, hyp_lines)]
    report = format_report(pairs, cfg.text())
    if args.out:
        _atomic_write(args.out, report)
    sys.stdout.write(report)


def cmd_rf(cfg: RunConfig, args) -> None:
    arch = _arch_for(cfg, cfg.alphabet_size + 1)
    layers = spatial_part(arch)
    print("# layer                          r_h  r_w  stride_h stride_w")
    seen = []
    sh = sw = 1
    for layer in layers:
        seen.append(layer)
        if layer.kind not in SPATIAL:
            continue
        sh *= layer.stride[0]
        sw *= layer.stride[1]
        rh, rw = receptive_field(seen)
        print(f"{layer.describe():32s} {rh:4d} {rw:4d} {sh:8d} {sw:8d}")
    rh, rw = receptive_field(layers)
    print(f"receptive field {rh}x{rw}")
    try:
        h, w, T = output_shape(arch, (cfg.height, args.width))
        print(f"input {cfg.height}x{args.width} -> T = {T}")
    except ConfigurationError as exc:
        print(f"input {cfg.height}x{args.width}: {exc}")


def cmd_lm(cfg: RunConfig, args) -> None:
    corpus = ink.load_corpus(_require(args.corpus, "corpus"))
    if not corpus:
        raise UsageError("empty corpus")
    symbols = ink.Alphabet.default(cfg.alphabet_size).symbols
    model = train_ngram(corpus, args.order or cfg.lm_order, args.smoothing, args.k, vocab=symbols)
    save_arpa(model, args.out)
    print(f"wrote order-{model.order} model to {args.out}")


COMMANDS = {"synth": cmd_synth, "featurize": cmd_featurize, "train": cmd_train,
            "decode": cmd_decode, "eval": cmd_eval, "rf": cmd_rf, "lm": cmd_lm}


def make_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON run configuration")
    shared.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    shared.add_argument("--arch", dest="preset_arch", choices=("desk", "full", "micro"))
    shared.add_argument("--seed", type=int)
    shared.add_argument("--sig-level", type=int, choices=range(4))
    shared.add_argument("--lm", help="ARPA language model for beam search")
    shared.add_argument("--lm-weight", type=float)
    shared.add_argument("--beam", type=int)
    shared.add_argument("--threshold", type=float)
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="inkscribe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[shared], help="write synthetic ink splits and an LM corpus")
    p.add_argument("--out", required=True)
    p = sub.add_parser("featurize", parents=[shared], help="dump one sample's signature maps as P2 files")
    p.add_argument("--ink", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p = sub.add_parser("train", parents=[shared], help="train a network on an ink file")
    p.add_argument("--ink", required=True)
    p.add_argument("--model", required=True, help="checkpoint directory to write")
    p = sub.add_parser("decode", parents=[shared], help="transcribe an ink file")
    p.add_argument("--model", required=True)
    p.add_argument("--ink", required=True)
    p.add_argument("--out", required=True)
    p = sub.add_parser("eval", parents=[shared], help="CR/AR of hypotheses against reference labels")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--out")
    p = sub.add_parser("rf", parents=[shared], help="receptive-field table")
    p.add_argument("--width", type=int, default=576)
    p = sub.add_parser("lm", parents=[shared], help="train an ARPA n-gram model from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--order", type=int, choices=(1, 2, 3))
    p.add_argument("--smoothing", choices=("katz", "addk"), default="katz")
    p.add_argument("--k", type=float, default=1.0)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigurationError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"inkscribe {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
