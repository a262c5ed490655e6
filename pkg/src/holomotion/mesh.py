"""Parameter meshes: nodes in C^m with a neighbour graph and cells.

A mesh is a finite graph whose nodes are parameters.  Grid meshes also
remember their integer (row, column) layout so stencils and 2-D cells can
be built without geometric searches.
"""
from collections import deque

import numpy as np


class Mesh:
    def __init__(self, nodes, edges, cells=(), base=0, grid_index=None, shape=None, step=None):
        nodes = np.asarray(nodes, dtype=complex)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.shape[0] == 0:
            raise ValueError("mesh has no nodes")
        self.nodes = nodes
        self.edges = np.asarray(edges, dtype=int).reshape(-1, 2)
        self.cells = [tuple(int(i) for i in c) for c in cells]
        self.base = int(base)
        self.grid_index = grid_index  # (N, 2*m) integer coordinates or None
        self.shape = shape
        self.step = step
        self._adj = None

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def m(self):
        return self.nodes.shape[1]

    @property
    def adjacency(self):
        if self._adj is None:
            adj = [[] for _ in range(len(self))]
            for a, b in self.edges:
                adj[a].append(int(b))
                adj[b].append(int(a))
            self._adj = adj
        return self._adj

    def bfs_order(self, start=None):
        """Breadth-first (node, parent) pairs from the base node."""
        start = self.base if start is None else int(start)
        seen = np.zeros(len(self), dtype=bool)
        seen[start] = True
        out = [(start, -1)]
        q = deque([start])
        while q:
            u = q.popleft()
            for v in self.adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    out.append((v, u))
                    q.append(v)
        return out

    def is_connected(self):
        return len(self.bfs_order()) == len(self)

    def nearest(self, lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        return int(np.argmin(np.linalg.norm(self.nodes - lam[None, :], axis=1)))

    def subset(self, keep):
        """Induced sub-mesh on a boolean mask or index list."""
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        remap = -np.ones(len(self), dtype=int)
        remap[keep] = np.arange(len(keep))
        e = remap[self.edges]
        e = e[(e >= 0).all(axis=1)]
        cells = [tuple(remap[list(c)]) for c in self.cells if (remap[list(c)] >= 0).all()]
        base = remap[self.base] if remap[self.base] >= 0 else 0
        gi = None if self.grid_index is None else self.grid_index[keep]
        return Mesh(self.nodes[keep], e, cells, base, gi, None, self.step)


def _grid_graph(ij, mask_shape=None):
    """Edges and square cells of integer points ij (N, 2)."""
    lookup = {tuple(p): n for n, p in enumerate(map(tuple, ij))}
    edges, cells = [], []
    for n, (i, j) in enumerate(map(tuple, ij)):
        for di, dj in ((1, 0), (0, 1)):
            o = lookup.get((i + di, j + dj))
            if o is not None:
                edges.append((n, o))
        c = [lookup.get(q) for q in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))]
        if all(q is not None for q in c):
            cells.append(tuple(c))
    return edges, cells


def box(re_range, im_range, step=None, n=None, base=None):
    """Square grid over a rectangle of the c-plane (m = 1).

    Give either the spacing or the number of points per axis; nodes are
    stored row-major with the real part varying fastest.
    """
    r0, r1 = re_range
    i0, i1 = im_range
    if n is not None:
        xs = np.linspace(r0, r1, n)
        ys = np.linspace(i0, i1, n)
        step = (r1 - r0) / max(n - 1, 1)
    else:
        nx = int(round((r1 - r0) / step)) + 1
        ny = int(round((i1 - i0) / step)) + 1
        xs = r0 + step * np.arange(nx)
        ys = i0 + step * np.arange(ny)
    X, Y = np.meshgrid(xs, ys)
    nodes = (X + 1j * Y).ravel()
    jj, ii = np.meshgrid(np.arange(len(xs)), np.arange(len(ys)))
    ij = np.stack([jj.ravel(), ii.ravel()], axis=1)
    edges, cells = _grid_graph(ij)
    b = 0 if base is None else int(np.argmin(np.abs(nodes - base)))
    return Mesh(nodes, edges, cells, b, ij, (len(ys), len(xs)), step)


def polydisk(center, radius, n):
    """Grid of spacing 2r/(n-1) clipped to the closed polydisk.

    For m = 2 the mesh is the product of two disk grids, with edges along
    each coordinate direction.  The center is always a node.
    """
    center = np.atleast_1d(np.asarray(center, dtype=complex))
    m = center.shape[0]
    n = int(n)
    if n % 2 == 0:
        n += 1
    h = 2.0 * radius / max(n - 1, 1)
    offs = h * (np.arange(n) - (n - 1) // 2)
    X, Y = np.meshgrid(offs, offs)
    disk = (X + 1j * Y).ravel()
    jj, ii = np.meshgrid(np.arange(n), np.arange(n))
    ij = np.stack([jj.ravel(), ii.ravel()], axis=1)
    keep = np.abs(disk) <= radius * (1 + 1e-12)
    disk, ij = disk[keep], ij[keep]
    if m == 1:
        edges, cells = _grid_graph(ij)
        nodes = center[0] + disk
        base = int(np.argmin(np.abs(disk)))
        return Mesh(nodes, edges, cells, base, ij, None, h)
    if m != 2:
        raise ValueError("polydisk meshes support m in {1, 2}")
    p = len(disk)
    A, B = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    A, B = A.ravel(), B.ravel()
    nodes = np.stack([center[0] + disk[A], center[1] + disk[B]], axis=1)
    ij4 = np.concatenate([ij[A], ij[B]], axis=1)
    lookup = {tuple(q): t for t, q in enumerate(map(tuple, ij4))}
    edges = []
    for t, q in enumerate(map(tuple, ij4)):
        for ax in range(4):
            r = list(q)
            r[ax] += 1
            o = lookup.get(tuple(r))
            if o is not None:
                edges.append((t, o))
    base = int(np.argmin(np.abs(disk[A]) + np.abs(disk[B])))
    return Mesh(nodes, edges, (), base, ij4, None, h)


def segment(a, b, n):
    """Points a + t (b - a), t in [0, 1], as a path graph (1-D cells)."""
    t = np.linspace(0.0, 1.0, int(n))
    nodes = complex(a) + t * (complex(b) - complex(a))
    edges = [(i, i + 1) for i in range(len(t) - 1)]
    return Mesh(nodes, edges, edges, base=len(t) // 2, step=abs(complex(b) - complex(a)) / max(n - 1, 1))


def single(lam):
    return Mesh(np.atleast_1d(np.asarray(lam, dtype=complex))[None, :], np.zeros((0, 2), int))
