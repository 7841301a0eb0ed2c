"""Write a gzipped IDX copy of the 5000-image MNIST sample bundled with mlxtend.

Usage: pip download --no-deps mlxtend && python3 scripts/build_mnist_subset.py mlxtend-*.whl data/mnist

The bundled sample holds 500 images per digit, sorted by label. Each digit
contributes 400 images to the training files and 100 to the test files, and
the rows are interleaved by digit so neither file is label-sorted.
"""
import gzip
import struct
import sys
import zipfile


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + bytes(payload))


def main(wheel, out_dir):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = [list(map(int, map(float, l.split(",")))) for l in gzip.decompress(raw).decode().splitlines()]
    by_digit = [[r for r in rows if r[-1] == d] for d in range(10)]
    train = [by_digit[d][i] for i in range(400) for d in range(10)]
    test = [by_digit[d][i] for i in range(400, 500) for d in range(10)]
    for name, part in (("train", train), ("t10k", test)):
        pixels = [p for r in part for p in r[:-1]]
        labels = [r[-1] for r in part]
        write_idx(f"{out_dir}/{name}-images-idx3-ubyte.gz", 0x803, (len(part), 28, 28), pixels)
        write_idx(f"{out_dir}/{name}-labels-idx1-ubyte.gz", 0x801, (len(part),), labels)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
