#!/usr/bin/env python3
"""Convert raw Planetoid files (ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index})
into the text layout read by `merit`: edges.tsv, features.txt, labels.txt, split.txt.

    python tools/planetoid_to_text.py --raw path/to/planetoid/data --name cora --out data/cora

The split is the public one: the first len(y) nodes train, the next 500
validate, and test.index lists the test nodes. CiteSeer has test indices with
no features; those rows are zero-filled and labelled with class 0 (they are
not in any split).
"""

import argparse
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def load_part(raw, name, part):
    with open(os.path.join(raw, f"ind.{name}.{part}"), "rb") as f:
        return pickle.load(f, encoding="latin1")


def convert(raw, name, out):
    x, y, tx, ty, allx, ally, graph = (load_part(raw, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    with open(os.path.join(raw, f"ind.{name}.test.index")) as f:
        test_idx = [int(line) for line in f if line.strip()]
    test_sorted = np.sort(test_idx)

    if name == "citeseer":
        full = range(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        ty = ty_ext

    features = sp.vstack((allx, tx)).tolil()
    features[test_idx, :] = features[test_sorted, :]
    labels = np.vstack((ally, ty))
    labels[test_idx, :] = labels[test_sorted, :]
    n = features.shape[0]

    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "edges.tsv"), "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")
    dense = np.asarray(features.todense())
    with open(os.path.join(out, "features.txt"), "w") as f:
        f.write(f"{n} {dense.shape[1]}\n")
        for row in dense:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")
    with open(os.path.join(out, "labels.txt"), "w") as f:
        f.write("\n".join(str(int(np.argmax(r))) for r in labels) + "\n")
    train = range(len(y))
    val = range(len(y), len(y) + 500)
    with open(os.path.join(out, "split.txt"), "w") as f:
        f.write("train: " + " ".join(map(str, train)) + "\n")
        f.write("val: " + " ".join(map(str, val)) + "\n")
        f.write("test: " + " ".join(map(str, test_sorted)) + "\n")
    print(f"{name}: {n} nodes, {len(edges)} undirected edges, {dense.shape[1]} features, "
          f"{labels.shape[1]} classes", file=sys.stderr)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--raw", required=True, help="directory holding the ind.<name>.* files")
    ap.add_argument("--name", required=True, choices=["cora", "citeseer", "pubmed"])
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    convert(args.raw, args.name, args.out)


if __name__ == "__main__":
    main()
