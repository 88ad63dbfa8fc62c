"""Reader and writer for the SDPA sparse text format.

The encoded problem is

    minimize    c' y
    subject to  F_1 y_1 + ... + F_m y_m - F_0  is positive semidefinite

with block-diagonal symmetric ``F_i``. The file layout is::

    "optional comment lines start with a double quote or an asterisk
    m
    nBlocks
    s_1 s_2 ... s_nBlocks
    c_1 c_2 ... c_m
    matno blkno i j value        (one line per nonzero, i <= j, 1-based)

``matno = 0`` refers to ``F_0``. Values are written with 17 significant
digits so that parsing recovers every coefficient bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SdpaProblem:
    block_sizes: list
    c: np.ndarray
    # (matno, blkno, i, j) -> value, 1-based indices, i <= j
    entries: dict = field(default_factory=dict)
    comments: list = field(default_factory=list)

    @property
    def m(self):
        return len(self.c)

    def add(self, matno, blkno, i, j, value):
        if i > j:
            i, j = j, i
        if value == 0.0:
            return
        key = (matno, blkno, i, j)
        total = self.entries.get(key, 0.0) + float(value)
        if total == 0.0:
            self.entries.pop(key, None)
        else:
            self.entries[key] = total

    def add_matrix(self, matno, blkno, M):
        M = np.asarray(M, dtype=float)
        for i in range(M.shape[0]):
            for j in range(i, M.shape[1]):
                if M[i, j] != 0.0:
                    self.add(matno, blkno, i + 1, j + 1, M[i, j])

    def matrix(self, matno, blkno):
        """Dense symmetric block ``blkno`` of ``F_matno``."""
        s = self.block_sizes[blkno - 1]
        M = np.zeros((s, s))
        for (mat, blk, i, j), v in self.entries.items():
            if mat == matno and blk == blkno:
                M[i - 1, j - 1] = v
                M[j - 1, i - 1] = v
        return M

    def constraint(self, y):
        """Blocks of ``sum_i F_i y_i - F_0``."""
        y = np.asarray(y, dtype=float)
        out = []
        for b in range(1, len(self.block_sizes) + 1):
            M = -self.matrix(0, b)
            for i in range(self.m):
                M = M + y[i] * self.matrix(i + 1, b)
            out.append(M)
        return out


def _fmt(x):
    return format(float(x), ".17g")


def dumps(problem):
    lines = [f'"{c}' for c in problem.comments]
    lines.append(str(problem.m))
    lines.append(str(len(problem.block_sizes)))
    lines.append(" ".join(str(int(s)) for s in problem.block_sizes))
    lines.append(" ".join(_fmt(v) for v in problem.c) if problem.m else "")
    for key in sorted(problem.entries):
        mat, blk, i, j = key
        lines.append(f"{mat} {blk} {i} {j} {_fmt(problem.entries[key])}")
    return "\n".join(lines) + "\n"


def _tokens(line):
    for ch in ",(){}":
        line = line.replace(ch, " ")
    return line.split()


def loads(text):
    """Parse SDPA sparse text; raises ``ValueError`` with a line number on bad input."""
    comments = []
    body = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped[0] in "\"*":
            if not body:
                comments.append(stripped[1:])
            continue
        body.append((lineno, stripped))
    if len(body) < 3:
        raise ValueError("SDPA text truncated: need m, nBlocks and block structure")
    try:
        m = int(_tokens(body[0][1])[0])
        nblocks = int(_tokens(body[1][1])[0])
        sizes = [int(t) for t in _tokens(body[2][1])[:nblocks]]
    except (ValueError, IndexError):
        raise ValueError(f"line {body[0][0]}: malformed SDPA header") from None
    if len(sizes) != nblocks:
        raise ValueError(f"line {body[2][0]}: expected {nblocks} block sizes")
    rest = body[3:]
    c_tokens = []
    idx = 0
    while len(c_tokens) < m:
        if idx >= len(rest):
            raise ValueError("SDPA text truncated in the objective vector")
        c_tokens.extend(_tokens(rest[idx][1]))
        idx += 1
    problem = SdpaProblem(sizes, np.array([float(t) for t in c_tokens[:m]]), comments=comments)
    for lineno, line in rest[idx:]:
        tok = _tokens(line)
        if len(tok) != 5:
            raise ValueError(f"line {lineno}: expected 'matno blkno i j value'")
        try:
            mat, blk, i, j = (int(t) for t in tok[:4])
            val = float(tok[4])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric entry") from None
        if not (0 <= mat <= m and 1 <= blk <= nblocks):
            raise ValueError(f"line {lineno}: matrix or block index out of range")
        s = abs(sizes[blk - 1])
        if not (1 <= i <= s and 1 <= j <= s):
            raise ValueError(f"line {lineno}: entry ({i}, {j}) outside block of size {s}")
        problem.add(mat, blk, i, j, val)
    return problem
