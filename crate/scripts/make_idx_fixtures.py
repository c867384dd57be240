#!/usr/bin/env python3
"""Write the IDX fixture corpus and its MANIFEST.tsv.

Usage: make_idx_fixtures.py <out dir>

MANIFEST.tsv columns: images file, labels file, expected outcome. The
outcome is `ok <n> <label,...>` for a valid pair, or `error <file> <offset>`
where <file> is `images` or `labels` and <offset> is the byte offset named
by the diagnostic (`-` when there is none, as for a broken gzip stream).
"""
import gzip
import struct
import sys
from pathlib import Path


def images(n, rows=28, cols=28, magic=0x00000803):
    body = bytes((r * cols + c + 50 * i) % 256 for i in range(n) for r in range(rows) for c in range(cols))
    return struct.pack(">IIII", magic, n, rows, cols) + body


def labels(values, magic=0x00000801):
    return struct.pack(">II", magic, len(values)) + bytes(values)


def main() -> None:
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    good_img, good_lbl = images(2), labels([7, 2])
    files = {
        "two.images.idx": good_img,
        "two.labels.idx": good_lbl,
        "two.images.idx.gz": gzip.compress(good_img, mtime=0),
        "two.labels.idx.gz": gzip.compress(good_lbl, mtime=0),
        "bad-magic.images.idx": images(2, magic=0x00000804),
        "bad-magic.labels.idx": labels([7, 2], magic=0x00000803),
        "empty.idx": b"",
        "short-header.images.idx": good_img[:10],
        "short-data.images.idx": good_img[:-100],
        "trailing.images.idx": good_img + b"\x00\x00\x00",
        "short-data.labels.idx": good_lbl[:-1],
        "three.labels.idx": labels([7, 2, 1]),
        "broken.images.idx.gz": gzip.compress(good_img, mtime=0)[:40],
    }
    for name, data in files.items():
        (out / name).write_bytes(data)
    n_img = len(good_img)
    manifest = [
        ("two.images.idx", "two.labels.idx", "ok 2 7,2"),
        ("two.images.idx.gz", "two.labels.idx.gz", "ok 2 7,2"),
        ("two.images.idx.gz", "two.labels.idx", "ok 2 7,2"),
        ("bad-magic.images.idx", "two.labels.idx", "error images 0"),
        ("two.images.idx", "bad-magic.labels.idx", "error labels 0"),
        ("empty.idx", "two.labels.idx", "error images 0"),
        ("two.images.idx", "empty.idx", "error labels 0"),
        ("short-header.images.idx", "two.labels.idx", "error images 8"),
        ("short-data.images.idx", "two.labels.idx", f"error images {n_img - 100}"),
        ("trailing.images.idx", "two.labels.idx", f"error images {n_img}"),
        ("two.images.idx", "short-data.labels.idx", "error labels 9"),
        ("two.images.idx", "three.labels.idx", "error labels 4"),
        ("broken.images.idx.gz", "two.labels.idx", "error images -"),
        ("two.labels.idx", "two.labels.idx", "error images 0"),
    ]
    with open(out / "MANIFEST.tsv", "w") as f:
        for row in manifest:
            f.write("\t".join(row) + "\n")
    print(f"wrote {len(files)} fixtures to {out}")


if __name__ == "__main__":
    main()
