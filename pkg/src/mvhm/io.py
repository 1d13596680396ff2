"""
Plain-text and JSON formats: pose files, prediction files, meshes, skinning
weights, coarsening hierarchies and per-sample annotations.

Floats are written with ``repr`` so every value reloads bit-identically.
See docs/formats.md for the layouts.
"""

import hashlib
import json

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, ValidationError
from .graphops import CoarseningHierarchy, hierarchy_problems

ANNOTATION_SCHEMA = "mvhm-annot/1"
MANIFEST_SCHEMA = "mvhm-manifest/1"
COARSENING_HEADER = "mvhm-coarsening/1"


def fmt(x):
    return repr(float(x))


def fmt_row(row):
    return " ".join(repr(v) for v in np.asarray(row, dtype=float).tolist())


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _floats(tokens, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"not a number: {exc}", line=lineno) from None


# ------------------------------------------------------------------ poses

def read_pose_text(text):
    """21 lines of 'x y z' (mm) per pose; poses separated by blank lines; '#' comments."""
    poses, cur, start = [], [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if raw.strip().startswith("#"):
                continue
            if cur:
                if len(cur) != 21:
                    raise ParseError(f"pose starting here has {len(cur)} rows, expected 21", line=start)
                poses.append(np.array(cur))
                cur = []
            continue
        tok = line.split()
        if len(tok) != 3:
            raise ParseError(f"expected 3 values 'x y z', got {len(tok)}", line=lineno)
        if not cur:
            start = lineno
        cur.append(_floats(tok, lineno))
        if len(cur) > 21:
            raise ParseError("pose has more than 21 rows (missing blank separator?)", line=lineno)
    if cur:
        if len(cur) != 21:
            raise ParseError(f"pose starting here has {len(cur)} rows, expected 21", line=start)
        poses.append(np.array(cur))
    return poses


def read_pose_file(path):
    with open(path) as fh:
        return read_pose_text(fh.read())


def write_pose_file(path, poses):
    with open(path, "w") as fh:
        fh.write("\n\n".join("\n".join(fmt_row(r) for r in np.asarray(p)) for p in poses) + "\n")


# ------------------------------------------------------------- predictions

def read_predictions(path):
    """'<sample_id> x0 y0 z0 ... x20 y20 z20' per line -> {id: (21, 3)}."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if len(tok) != 64:
                raise ParseError(f"expected a sample id and 63 values, got {len(tok)} tokens", line=lineno)
            if tok[0] in out:
                raise ParseError(f"duplicate sample id {tok[0]!r}", line=lineno)
            vals = np.array(_floats(tok[1:], lineno))
            if not np.all(np.isfinite(vals)):
                raise ParseError("non-finite coordinate", line=lineno)
            out[tok[0]] = vals.reshape(21, 3)
    return out


def write_predictions(path, preds):
    with open(path, "w") as fh:
        for sid in sorted(preds):
            fh.write(f"{sid} {fmt_row(np.ravel(preds[sid]))}\n")


# ------------------------------------------------------------------ meshes

def write_obj(path, vertices, faces):
    with open(path, "w") as fh:
        for v in np.asarray(vertices):
            fh.write(f"v {fmt_row(v)}\n")
        for f in np.asarray(faces) + 1:
            fh.write(f"f {f[0]} {f[1]} {f[2]}\n")


def read_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            tok = raw.split()
            if not tok or tok[0].startswith("#"):
                continue
            if tok[0] == "v" and len(tok) == 4:
                verts.append(_floats(tok[1:], lineno))
            elif tok[0] == "f" and len(tok) == 4:
                try:
                    faces.append([int(t.split("/")[0]) - 1 for t in tok[1:]])
                except ValueError:
                    raise ParseError("bad face index", line=lineno) from None
            else:
                raise ParseError(f"unsupported record {tok[0]!r}", line=lineno)
    return np.array(verts), np.array(faces, dtype=np.int64)


def write_vertices(path, vertices):
    with open(path, "w") as fh:
        fh.write("\n".join(fmt_row(v) for v in np.asarray(vertices)) + "\n")


def read_vertices(path):
    with open(path) as fh:
        rows = [_floats(line.split(), i) for i, line in enumerate(fh, 1) if line.strip()]
    return np.array(rows)


def write_weights(path, weights):
    """One line per vertex: 'bone:weight' pairs for its nonzero influences."""
    with open(path, "w") as fh:
        for row in np.asarray(weights):
            nz = np.flatnonzero(row)
            fh.write(" ".join(f"{b}:{fmt(row[b])}" for b in nz) + "\n")


def read_weights(path, num_bones=21):
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            row = np.zeros(num_bones)
            for item in raw.split():
                try:
                    b, w = item.split(":")
                    row[int(b)] = float(w)
                except (ValueError, IndexError):
                    raise ParseError(f"bad weight entry {item!r}", line=lineno) from None
            rows.append(row)
    return np.array(rows)


# -------------------------------------------------------------- coarsening

def write_hierarchy(path, h):
    """
    Header, then per level: 'level l nodes n real r edges e', e lines 'i j w'
    (i < j), then for every level but the last a line 'parents' followed by one
    line of n parent indices. Fake nodes are the trailing n - r indices.
    """
    lines = [COARSENING_HEADER, f"levels {h.levels}"]
    for l, (A, fake) in enumerate(zip(h.adjacency, h.fake)):
        T = sp.triu(A, k=1).tocoo()
        order = np.lexsort((T.col, T.row))
        n_real = int((~fake).sum())
        lines.append(f"level {l} nodes {len(fake)} real {n_real} edges {len(order)}")
        lines += [f"{T.row[k]} {T.col[k]} {fmt(T.data[k])}" for k in order]
        if l < h.levels:
            lines.append("parents")
            lines.append(" ".join(map(str, h.parents[l].tolist())))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_hierarchy(path):
    """Load and validate a hierarchy; raises ParseError or ValidationError."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of file", line=pos + 1)
        pos += 1
        return lines[pos - 1].split()

    if take() != [COARSENING_HEADER]:
        raise ParseError(f"missing '{COARSENING_HEADER}' header", line=1)
    tok = take()
    if len(tok) != 2 or tok[0] != "levels" or not tok[1].isdigit():
        raise ParseError("expected 'levels <count>'", line=pos)
    levels = int(tok[1])
    adj, parents, fakes = [], [], []
    for l in range(levels + 1):
        tok = take()
        try:
            assert tok[0] == "level" and int(tok[1]) == l and tok[2] == "nodes" and tok[4] == "real" \
                and tok[6] == "edges" and len(tok) == 8
            n, n_real, n_edges = int(tok[3]), int(tok[5]), int(tok[7])
        except (AssertionError, IndexError, ValueError):
            raise ParseError(f"expected 'level {l} nodes <n> real <r> edges <e>'", line=pos) from None
        if not 0 <= n_real <= n:
            raise ParseError("real node count out of range", line=pos)
        rows, cols, vals = [], [], []
        for _ in range(n_edges):
            t = take()
            if len(t) != 3:
                raise ParseError("expected 'i j w'", line=pos)
            try:
                i, j, w = int(t[0]), int(t[1]), float(t[2])
            except ValueError:
                raise ParseError("bad edge record", line=pos) from None
            if not (0 <= i < j < n):
                raise ParseError(f"edge ({i}, {j}) invalid for {n} nodes", line=pos)
            rows.append(i)
            cols.append(j)
            vals.append(w)
        U = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        A = sp.csr_matrix(U + U.T)
        A.sort_indices()
        adj.append(A)
        fake = np.zeros(n, dtype=bool)
        fake[n_real:] = True
        fakes.append(fake)
        if l < levels:
            if take() != ["parents"]:
                raise ParseError("expected 'parents'", line=pos)
            t = take()
            try:
                p = np.array([int(x) for x in t], dtype=np.int64)
            except ValueError:
                raise ParseError("bad parent index", line=pos) from None
            parents.append(p)
    h = CoarseningHierarchy(tuple(adj), tuple(parents), tuple(fakes))
    problems = hierarchy_problems(h)
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems))
    return h


# ------------------------------------------------------------- annotations

def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from None


def load_annotation(path):
    ann = load_json(path)
    if ann.get("schema") != ANNOTATION_SCHEMA:
        raise ValidationError(f"{path}: unsupported annotation schema {ann.get('schema')!r}")
    return ann
