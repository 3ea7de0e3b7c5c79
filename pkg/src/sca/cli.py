"""``sca`` command line: train, encode-share, decode, attack, stats, metrics.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import metrics as M
from .net import CodecNet
from .pipeline import guess_decode, keyless_decode, reconstruct, share
from .protocol import verify_support
from .rate import guess_log2, rate_report
from .storage import KeyFile, PublicStore, load_config, load_image_dir, read_image, write_image
from .train import Dataset, train, write_loss_csv

log = logging.getLogger("sca")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    items = load_image_dir(args.data, cfg.network.input_shape)
    if not items:
        raise DataError(f"no usable images in {args.data}")
    if len(items) < 10:
        log.warning("only %d usable images; at least 10 are expected", len(items))
    dataset = Dataset(items, split_seed=cfg.split_seed)
    result = train(cfg.network, dataset, epochs=cfg.epochs, batch_size=cfg.batch_size, seed=seed, lr=cfg.lr)
    result.model.save(args.out)
    loss_path = args.loss_csv or str(Path(args.out).with_suffix(".loss.csv"))
    write_loss_csv(loss_path, result.history)
    print(f"model: {args.out}  loss history: {loss_path}  epochs: {len(result.history)}")
    return EXIT_OK


def cmd_encode_share(args) -> int:
    model = CodecNet.load(args.model)
    items = load_image_dir(args.data, model.config.input_shape)
    if not items:
        raise DataError(f"no usable images in {args.data}")
    store, keys, _ = share(model, items, k_n=args.k_n, seed=args.seed)
    store.save(args.public)
    keys.save(args.keys)
    print(f"{len(store)} items: public store {args.public} (k'={store.k_prime}), keys {args.keys} (k={keys.k})")
    return EXIT_OK


def _load_store_item(args):
    model = CodecNet.load(args.model)
    store = PublicStore.load(args.public)
    if args.item not in store.records:
        raise DataError(f"item {args.item!r} not in public store")
    return model, store


def cmd_decode(args) -> int:
    model, store = _load_store_item(args)
    if args.keys:
        keys = KeyFile.load(args.keys)
        if args.item not in keys.records:
            raise DataError(f"item {args.item!r} not in key file")
        img = reconstruct(model, store, args.item, keys)
    else:
        img = keyless_decode(model, store[args.item])
    write_image(args.out, img)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_attack(args) -> int:
    model, store = _load_store_item(args)
    u_p = store[args.item]
    if args.k > u_p.k_prime:
        raise DataError(f"k={args.k} exceeds k'={u_p.k_prime}")
    img, guess = guess_decode(model, u_p, args.k, args.seed)
    write_image(args.out, img)
    report = {
        "item": args.item,
        "k": args.k,
        "k_prime": u_p.k_prime,
        "L": u_p.L,
        "seed": args.seed,
        "guess_log2": guess_log2(u_p.k_prime, args.k, u_p.L),
        "guessed_support": guess.indices.tolist(),
    }
    if args.keys:
        keys = KeyFile.load(args.keys)
        if keys.k == args.k:
            report["true_hits_per_group"] = verify_support(guess, keys[args.item])
    text = json.dumps(report, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_stats(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        net = cfg.network
        m, k, L, shape = net.m, net.k, net.L, net.input_shape
        k_n = args.k_n if args.k_n is not None else (cfg.k_n if cfg.k_n is not None else k)
        k_prime = k + k_n
    elif args.public:
        store = PublicStore.load(args.public)
        if args.k is None or args.shape is None:
            raise DataError("stats on a public store needs --k and --shape")
        m, L, k_prime, k, shape = store.m, store.L, store.k_prime, args.k, args.shape
    else:
        missing = [n for n in ("m", "k", "L", "shape") if getattr(args, n) is None]
        if missing:
            raise DataError("stats needs --config, --public, or --m/--k/--L/--shape (missing: " + ", ".join(missing) + ")")
        m, k, L, shape = args.m, args.k, args.L, args.shape
        k_prime = args.k_prime if args.k_prime is not None else k + (args.k_n if args.k_n is not None else k)
    k_prime = min(k_prime, m)
    try:
        report = rate_report(m, k, k_prime, L, tuple(shape), bits_per_value=args.bits)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if not args.json:
        print(report.to_text())
        print()
    print(report.to_json())
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref_dir, test_dir = Path(args.reference), Path(args.test)
    refs = {p.stem: p for p in sorted(ref_dir.iterdir()) if p.suffix.lower() in (".pgm", ".ppm", ".pnm")}
    rows = []
    for stem, ref_path in refs.items():
        cands = [test_dir / (stem + s) for s in (".pgm", ".ppm", ".pnm")]
        test_path = next((c for c in cands if c.exists()), None)
        if test_path is None:
            log.warning("no test image for %s", stem)
            continue
        a, b = read_image(ref_path), read_image(test_path)
        if a.shape != b.shape:
            log.warning("shape mismatch for %s: %s vs %s", stem, a.shape, b.shape)
            continue
        q = M.quality(a, b)
        rows.append((stem, M.format_psnr(q.psnr_db), f"{q.ssim:.6f}"))
    if not rows:
        raise DataError("no comparable image pairs")
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["item_id", "psnr_db", "ssim"])
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _shape(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.replace("x", ",").split(",") if p]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("shape must be C,H,W")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sca", description="Sparse coding with ambiguation for private image sharing.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train the codec on a directory of PGM/PPM images")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="model checkpoint path")
    t.add_argument("--loss-csv")
    t.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("encode-share", help="encode images into a public store and a key file")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--k-n", type=int, default=None, help="decoys per group (default k)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--public", required=True)
    e.add_argument("--keys", required=True)
    e.set_defaults(func=cmd_encode_share)

    d = sub.add_parser("decode", help="reconstruct one item, with or without its key")
    d.add_argument("--model", required=True)
    d.add_argument("--public", required=True)
    d.add_argument("--keys")
    d.add_argument("--item", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_decode)

    a = sub.add_parser("attack", help="decode one item from a random support guess")
    a.add_argument("--model", required=True)
    a.add_argument("--public", required=True)
    a.add_argument("--item", required=True)
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.add_argument("--keys", help="true keys, to report how many guessed indices are real")
    a.add_argument("--report")
    a.set_defaults(func=cmd_attack)

    s = sub.add_parser("stats", help="key size, store size, rate and guessing complexity")
    s.add_argument("--config")
    s.add_argument("--public")
    s.add_argument("--m", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--k-prime", type=int)
    s.add_argument("--k-n", type=int)
    s.add_argument("--L", type=int)
    s.add_argument("--shape", type=_shape)
    s.add_argument("--bits", type=int, default=32, help="bits per stored value")
    s.add_argument("--json", action="store_true", help="JSON only")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_stats)

    q = sub.add_parser("metrics", help="PSNR/SSIM CSV between two image directories")
    q.add_argument("--reference", required=True)
    q.add_argument("--test", required=True)
    q.add_argument("--out")
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataError, KeyError, ValueError, OSError, EOFError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"sca {args.command}: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
