"""Command-line front end: train, eval, export-hierarchy, synth.

Configuration precedence is flag > config file > default; every run writes
its fully resolved configuration (with the winning source per key) next to
its outputs.  Exit status: 0 on success, 1 on validation errors, 2 on I/O
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .corpus import (
    CorpusFormatError,
    load_corpus,
    save_corpus,
    split_documents,
    split_words,
    subsample_words,
)
from .distributions import ParameterError, RngStream
from .evaluation import (
    build_cooccurrence,
    extract_hierarchy,
    npmi_coherence,
    top_word_ids,
)
from .network import DirBNConfig, generate_corpus, init_state, redraw_topics_from_prior
from .snapshot import SnapshotError, load_samples, load_state, save_samples, save_state
from .topicmodel import TrainSettings, infer_theta_heldout, train

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_widths(text: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(part) for part in str(text).split(","))
    except ValueError as exc:
        raise ParameterError(f"bad widths {text!r}: expected comma-separated ints") from exc
    if not widths or any(w < 1 for w in widths):
        raise ParameterError(f"widths must all be positive, got {text!r}")
    return widths


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    val = str(text).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"bad boolean value {text!r}")


# key -> (converter, default); shared across subcommands, each declares the
# subset it uses
_KEYS = {
    "docword": (str, None),
    "vocab": (str, None),
    "labels": (str, None),
    "depth": (int, 1),
    "widths": (_parse_widths, None),
    "iters": (int, 3000),
    "burnin": (int, 1500),
    "thin": (int, 10),
    "seed": (int, 0),
    "subsample": (float, 1.0),
    "doc_split": (float, 0.8),
    "threads": (int, 0),
    "out_dir": (str, None),
    "top_n": (int, 10),
    "link_threshold": (float, 0.0),
    "fix_top_hypers": (_parse_bool, False),
    "alpha_theta": (float, 0.1),
    "a0": (float, 1.0),
    "b0": (float, 1.0),
    "e0": (float, 0.01),
    "f0": (float, 0.01),
    "g0": (float, 1.0),
    "h0": (float, 1.0),
    "inner_iters": (int, 20),
    "activity_threshold": (float, 0.001),
    "docs": (int, 1000),
    "doc_len": (int, 50),
    "theta_concentration": (float, 0.3),
    "eta": (float, None),
    "vocab_size": (int, 100),
}


def _read_config_file(path: str) -> dict:
    """Flat key = value text file; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _resolve(args, keys) -> dict:
    """Apply flag > config file > default and record each value's source."""
    file_values = _read_config_file(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key in keys:
        convert, default = _KEYS[key]
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = {"value": convert(flag_value), "source": "flag"}
        elif key in file_values:
            resolved[key] = {"value": convert(file_values[key]), "source": "config"}
        else:
            resolved[key] = {"value": default, "source": "default"}
    return resolved


def _values(resolved: dict) -> dict:
    return {k: v["value"] for k, v in resolved.items()}


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def _write_resolved(resolved: dict, out_dir: Path, command: str) -> None:
    payload = {
        "command": command,
        "config": {
            k: {"value": _jsonable(v["value"]), "source": v["source"]}
            for k, v in sorted(resolved.items())
        },
    }
    (out_dir / f"resolved_config.{command}.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _model_config(v: dict, vocab_size: int) -> DirBNConfig:
    if v["widths"] is not None:
        widths = v["widths"]
        if v["depth"] != len(widths) and v["depth"] != _KEYS["depth"][1]:
            raise ParameterError(
                f"depth {v['depth']} does not match widths of length {len(widths)}"
            )
    else:
        widths = (100,) * v["depth"]
    return DirBNConfig(
        layer_widths=widths,
        vocab_size=vocab_size,
        a0=v["a0"],
        b0=v["b0"],
        e0=v["e0"],
        f0=v["f0"],
        g0=v["g0"],
        h0=v["h0"],
        sample_top_hypers=not v["fix_top_hypers"],
    )


def _require(v: dict, *keys) -> None:
    missing = [k for k in keys if v.get(k) is None]
    if missing:
        raise ParameterError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


def _out_dir(v: dict) -> Path:
    _require(v, "out_dir")
    out = Path(v["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    resolved = _resolve(
        args,
        [
            "docword", "vocab", "labels", "depth", "widths", "iters", "burnin",
            "thin", "seed", "subsample", "doc_split", "threads", "out_dir",
            "fix_top_hypers", "alpha_theta", "a0", "b0", "e0", "f0", "g0", "h0",
            "activity_threshold",
        ],
    )
    v = _values(resolved)
    _require(v, "docword", "vocab")
    out = _out_dir(v)
    corpus = load_corpus(v["docword"], v["vocab"], v["labels"])
    train_docs, test_docs = split_documents(corpus, v["doc_split"], v["seed"])
    if v["subsample"] < 1.0:
        train_docs = subsample_words(train_docs, v["subsample"], v["seed"])
    config = _model_config(v, corpus.vocab_size)
    settings = TrainSettings(
        iterations=v["iters"],
        burnin=v["burnin"],
        thinning=v["thin"],
        alpha_theta=v["alpha_theta"],
        seed=v["seed"],
        activity_threshold=v["activity_threshold"],
    )
    log_path = out / "training_log.tsv"
    with open(log_path, "w", encoding="utf-8") as log_file:
        def _log(line: str) -> None:
            log_file.write(line + "\n")
            it = int(line.split("\t", 1)[0])
            if it == 1 or it % 100 == 0:
                print(f"[train] {line}", file=sys.stderr)

        result = train(train_docs, config, settings, log_fn=_log)

    save_state(out / "state.npz", result.state, settings.iterations, settings.seed,
               layer_masses=result.final_masses)
    save_samples(
        out / "samples.npz",
        result.theta_samples,
        result.phi1_samples,
        meta={"seed": settings.seed, "alpha_theta": settings.alpha_theta},
    )
    save_corpus(train_docs, out / "train_docs.txt", out / "vocab.txt")
    save_corpus(test_docs, out / "test_docs.txt")
    _write_resolved(resolved, out, "train")
    print(f"wrote state, samples and splits to {out}")
    return 0


def cmd_eval(args) -> int:
    resolved = _resolve(
        args,
        ["out_dir", "seed", "top_n", "alpha_theta", "inner_iters", "threads",
         "activity_threshold"],
    )
    v = _values(resolved)
    out = _out_dir(v)
    state, _, _, masses = load_state(out / "state.npz")
    theta_samples, phi_samples, _ = load_samples(out / "samples.npz")
    if phi_samples.shape[0] == 0:
        raise ParameterError("no posterior samples stored; train past burnin first")
    test_docs = load_corpus(out / "test_docs.txt", out / "vocab.txt")
    train_docs = load_corpus(out / "train_docs.txt", out / "vocab.txt")

    split = split_words(test_docs, v["seed"])
    theta_hat = infer_theta_heldout(
        phi_samples, split.observed, v["alpha_theta"], v["inner_iters"], v["seed"]
    )
    from .evaluation import perplexity as _perplexity

    perp = _perplexity(phi_samples, theta_hat, split.heldout)
    phi_mean = phi_samples.mean(axis=0)
    topics = [top_word_ids(phi_mean[:, k], v["top_n"]) for k in range(phi_mean.shape[1])]
    scores, aggregate = npmi_coherence(topics, build_cooccurrence(train_docs))
    active = (
        [int((m > v["activity_threshold"]).sum()) for m in masses]
        if masses is not None
        else []
    )
    metrics = {
        "perplexity": perp,
        "npmi_aggregate": aggregate,
        "npmi_per_topic": [float(s) for s in scores],
        "active_topics_per_layer": active,
        "metadata": {
            "seed": v["seed"],
            "coherence_note": (
                "aggregate averages the 50 highest-NPMI topics as a stand-in "
                "for discarding incoherent leftovers; reference statistics "
                "come from the training split"
            ),
        },
    }
    (out / "metrics.json").write_text(
        json.dumps(metrics, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _write_resolved(resolved, out, "eval")
    print(f"perplexity={perp:.4f} npmi={aggregate:.4f} -> {out / 'metrics.json'}")
    return 0


def cmd_export_hierarchy(args) -> int:
    resolved = _resolve(args, ["out_dir", "top_n", "link_threshold"])
    v = _values(resolved)
    out = _out_dir(v)
    state, _, _, masses = load_state(out / "state.npz")
    vocab_path = out / "vocab.txt"
    if not vocab_path.exists():
        raise FileNotFoundError(f"vocabulary file not found: {vocab_path}")
    vocab = vocab_path.read_text(encoding="utf-8").splitlines()
    hierarchy = extract_hierarchy(
        state, vocab, top_n=v["top_n"], link_threshold=v["link_threshold"],
        layer_masses=masses,
    )
    lines = [json.dumps(rec, sort_keys=True) for rec in hierarchy.to_records()]
    (out / "hierarchy.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_resolved(resolved, out, "export-hierarchy")
    print(f"wrote {len(lines)} records to {out / 'hierarchy.jsonl'}")
    return 0


def cmd_synth(args) -> int:
    resolved = _resolve(
        args,
        ["out_dir", "seed", "depth", "widths", "docs", "doc_len",
         "theta_concentration", "eta", "vocab_size",
         "a0", "b0", "e0", "f0", "g0", "h0", "fix_top_hypers"],
    )
    v = _values(resolved)
    out = _out_dir(v)
    config = _model_config(v, v["vocab_size"])
    rng = RngStream(v["seed"])
    state = init_state(config, rng)
    if v["eta"] is not None:
        if not v["eta"] > 0:
            raise ParameterError("eta must be positive")
        state.eta = v["eta"]
        redraw_topics_from_prior(state, rng.substream(1))
    corpus, theta, phi1 = generate_corpus(
        state, v["docs"], v["doc_len"], v["theta_concentration"], rng.substream(2)
    )
    save_corpus(corpus, out / "docword.txt", out / "vocab.txt")
    np.savez(out / "truth.npz", phi1=phi1, theta=theta, eta=np.asarray(state.eta))
    _write_resolved(resolved, out, "synth")
    print(f"wrote synthetic corpus ({corpus.num_docs} docs, V={corpus.vocab_size}) to {out}")
    return 0


def _add_flags(sub, names):
    for name in names:
        flag = "--" + name.replace("_", "-")
        if name == "fix_top_hypers":
            sub.add_argument(flag, action="store_const", const=True, default=None,
                             help="hold the per-layer shape budget and its rate fixed")
        else:
            sub.add_argument(flag, default=None, help=argparse.SUPPRESS)
    sub.add_argument("--config", default=None, help="flat key = value configuration file")


def build_parser() -> _Parser:
    parser = _Parser(prog="dirbn", description=__doc__)
    subs = parser.add_subparsers(dest="command")

    p_train = subs.add_parser("train", help="run the Gibbs chain and write artifacts")
    _add_flags(p_train, [
        "docword", "vocab", "labels", "depth", "widths", "iters", "burnin",
        "thin", "seed", "subsample", "doc_split", "threads", "out_dir",
        "fix_top_hypers", "alpha_theta", "a0", "b0", "e0", "f0", "g0", "h0",
        "activity_threshold",
    ])
    p_train.set_defaults(func=cmd_train)

    p_eval = subs.add_parser("eval", help="heldout perplexity and topic coherence")
    _add_flags(p_eval, ["out_dir", "seed", "top_n", "alpha_theta", "inner_iters",
                        "threads", "activity_threshold"])
    p_eval.set_defaults(func=cmd_eval)

    p_export = subs.add_parser("export-hierarchy", help="top words and link weights per layer")
    _add_flags(p_export, ["out_dir", "top_n", "link_threshold"])
    p_export.set_defaults(func=cmd_export_hierarchy)

    p_synth = subs.add_parser("synth", help="generate a synthetic corpus with ground truth")
    _add_flags(p_synth, ["out_dir", "seed", "depth", "widths", "docs", "doc_len",
                         "theta_concentration", "eta", "vocab_size",
                         "a0", "b0", "e0", "f0", "g0", "h0", "fix_top_hypers"])
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(f"dirbn: {exc}", file=sys.stderr)
        return 1
    except (ParameterError, CorpusFormatError, SnapshotError, ValueError) as exc:
        print(f"dirbn: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"dirbn: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
