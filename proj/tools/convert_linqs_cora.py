#!/usr/bin/env python3
"""Convert the LINQS Cora release (cora.content, cora.cites) to the dataset
directory layout read by `paraformer`.

Nodes keep the row order of cora.content. Classes are numbered by sorted
class name. Every line of cora.cites becomes one edge line, so duplicate
citations in opposite directions are kept (the loader de-duplicates).

usage: convert_linqs_cora.py SRC_DIR OUT_DIR
"""
import json
import os
import sys


def main(argv):
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    src, out = argv[1], argv[2]
    rows = []
    with open(os.path.join(src, "cora.content")) as f:
        for line in f:
            parts = line.split()
            if parts:
                rows.append((parts[0], parts[1:-1], parts[-1]))
    index = {pid: i for i, (pid, _, _) in enumerate(rows)}
    classes = sorted({c for _, _, c in rows})
    class_id = {c: i for i, c in enumerate(classes)}
    d = len(rows[0][1])

    edges = []
    with open(os.path.join(src, "cora.cites")) as f:
        for line in f:
            parts = line.split()
            if len(parts) == 2:
                edges.append((index[parts[0]], index[parts[1]]))

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "edges.txt"), "w") as f:
        for u, v in edges:
            f.write(f"{u} {v}\n")
    with open(os.path.join(out, "features.csv"), "w") as f:
        for _, feats, _ in rows:
            f.write(",".join(feats) + "\n")
    with open(os.path.join(out, "labels.csv"), "w") as f:
        for _, _, c in rows:
            f.write(f"{class_id[c]}\n")
    manifest = {
        "name": "cora",
        "n": len(rows),
        "m": len(edges),
        "d": d,
        "c": len(classes),
        "directed": False,
        "classes": classes,
        "files": {
            "edges": "edges.txt",
            "features": "features.csv",
            "labels": "labels.csv",
            "splits": "splits.json",
        },
    }
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(f"n={len(rows)} m={len(edges)} d={d} c={len(classes)}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
