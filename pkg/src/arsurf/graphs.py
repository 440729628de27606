"""Labelled graphs of totally oriented structures and their equivalence.

Vertices are connected components of the complement of the singular set,
labelled (sign, Euler characteristic); edges are components of the singular
set, labelled with the cyclic tuple of tangency contributions read along the
curve oriented as the boundary of the positive side.  Reversing the bundle
orientation negates vertex signs and entry-negates + order-reverses every
edge tuple; two graphs are equivalent when they are isomorphic directly or
after one flip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .models import ArsurfError


class GraphError(ArsurfError):
    pass


def canonical_cycle(label):
    """Lexicographically minimal rotation of a cyclic tuple."""
    label = tuple(int(v) for v in label if v != 0)
    if not label:
        return ()
    rots = [label[i:] + label[:i] for i in range(len(label))]
    return min(rots)


@dataclass(frozen=True)
class Edge:
    ends: tuple   # (vertex index, vertex index)
    label: tuple  # canonical cyclic tuple of +-1 entries

    def __post_init__(self):
        object.__setattr__(self, "ends", tuple(int(v) for v in self.ends))
        object.__setattr__(self, "label", canonical_cycle(self.label))


@dataclass
class LabelledGraph:
    vertices: list  # [(sign, chi)]
    edges: list     # [Edge]

    def __post_init__(self):
        self.vertices = [(int(s), int(c)) for s, c in self.vertices]
        self.edges = [e if isinstance(e, Edge) else Edge(*e)
                      for e in self.edges]
        for e in self.edges:
            u, v = e.ends
            if not (0 <= u < len(self.vertices)
                    and 0 <= v < len(self.vertices)):
                raise GraphError("edge endpoint out of range")
            if self.vertices[u][0] * self.vertices[v][0] != -1:
                raise GraphError("edge endpoints must have opposite signs")

    def to_json(self):
        return {
            "vertices": [{"sign": s, "chi": c} for s, c in self.vertices],
            "edges": [{"v": list(e.ends), "label": list(e.label)}
                      for e in self.edges],
        }

    @classmethod
    def from_json(cls, src):
        if isinstance(src, (str, bytes)):
            src = json.loads(src)
        verts = [(v["sign"], v["chi"]) for v in src["vertices"]]
        edges = [Edge(tuple(e["v"]), tuple(e.get("label", ())))
                 for e in src["edges"]]
        return cls(verts, edges)


def euler_number(g):
    """sum sign(v) chi(v) + sum of all edge-label entries (= e(E))."""
    total = sum(s * c for s, c in g.vertices)
    total += sum(sum(e.label) for e in g.edges)
    return int(total)


def surface_chi(g):
    """chi(M) = sum of vertex Euler characteristics."""
    return int(sum(c for _s, c in g.vertices))


def flip_orientation(g):
    """Opposite orientation on the bundle: vertex signs negate; each edge
    tuple is entry-negated and order-reversed."""
    verts = [(-s, c) for s, c in g.vertices]
    edges = [Edge(e.ends, tuple(-v for v in reversed(e.label)))
             for e in g.edges]
    return LabelledGraph(verts, edges)


def _edge_key_multiset(g, mapping=None):
    """Dict (u, v) -> sorted list of canonical labels, vertices remapped."""
    out = {}
    for e in g.edges:
        u, v = e.ends
        if mapping is not None:
            u, v = mapping[u], mapping[v]
        key = (min(u, v), max(u, v))
        out.setdefault(key, []).append(e.label)
    for key in out:
        out[key].sort()
    return out


def graphs_equivalent(g1, g2):
    """Equivalence up to bundle-orientation flip; returns (bool, witness).

    The witness is (flipped, mapping) with mapping[i] the g2-vertex matched
    to g1-vertex i.
    """
    for flipped, h in ((False, g1), (True, flip_orientation(g1))):
        mapping = _isomorphism(h, g2)
        if mapping is not None:
            return True, {"flipped": flipped, "mapping": mapping}
    return False, None


def _isomorphism(g1, g2):
    n = len(g1.vertices)
    if n != len(g2.vertices) or len(g1.edges) != len(g2.edges):
        return None
    if sorted(g1.vertices) != sorted(g2.vertices):
        return None
    target = _edge_key_multiset(g2)
    # backtracking over label classes
    by_label = {}
    for j, lab in enumerate(g2.vertices):
        by_label.setdefault(lab, []).append(j)
    order = sorted(range(n), key=lambda i: g1.vertices[i])
    mapping = [-1] * n
    used = [False] * len(g2.vertices)

    adj1 = _edge_key_multiset(g1)

    def consistent(i, j, mapping):
        # all edges of g1 between assigned vertices must match labels
        for (u, v), labels in adj1.items():
            if mapping[u] == -1 and u != i:
                continue
            if mapping[v] == -1 and v != i:
                continue
            mu = j if u == i else mapping[u]
            mv = j if v == i else mapping[v]
            key = (min(mu, mv), max(mu, mv))
            if key not in target or sorted(labels) != target[key]:
                return False
        return True

    def backtrack(k):
        if k == n:
            return True
        i = order[k]
        for j in by_label.get(g1.vertices[i], []):
            if used[j]:
                continue
            if not consistent(i, j, mapping):
                continue
            mapping[i] = j
            used[j] = True
            if backtrack(k + 1):
                return True
            mapping[i] = -1
            used[j] = False
        return False

    return list(mapping) if backtrack(0) else None


# ---------------------------------------------------------------------------
# surface discretizations
# ---------------------------------------------------------------------------

@dataclass
class SurfaceDiscretization:
    """Triangulated closed oriented surface with a face sign field.

    faces are vertex triples with consistent (counterclockwise) orientation;
    tangency_markers are ((a, b), tau) records attached to mesh edges lying
    on the sign interface.
    """
    n_vertices: int
    faces: np.ndarray          # (F, 3) int
    face_sign: np.ndarray      # (F,) +-1
    tangency_markers: list = field(default_factory=list)

    def __post_init__(self):
        self.faces = np.asarray(self.faces, dtype=int)
        self.face_sign = np.asarray(self.face_sign, dtype=int)
        if set(np.unique(self.face_sign)) - {1, -1}:
            raise GraphError("face signs must be +-1")

    def chi(self):
        edges = set()
        for f in self.faces:
            for k in range(3):
                edges.add(frozenset((int(f[k]), int(f[(k + 1) % 3]))))
        return int(self.n_vertices - len(edges) + len(self.faces))


def _edge_faces(faces):
    ef = {}
    for fi, f in enumerate(faces):
        for k in range(3):
            a, b = int(f[k]), int(f[(k + 1) % 3])
            ef.setdefault(frozenset((a, b)), []).append((fi, (a, b)))
    return ef


def build_graph(disc):
    """Labelled graph of a discretized structure (flood fill + interface
    walking, tuple order fixed by the boundary-of-plus orientation)."""
    faces = disc.faces
    signs = disc.face_sign
    ef = _edge_faces(faces)
    for e, fs in ef.items():
        if len(fs) != 2:
            raise GraphError("mesh is not a closed surface (open edge)")

    # face adjacency within equal signs
    nf = len(faces)
    comp = np.full(nf, -1)
    n_comp = 0
    for start in range(nf):
        if comp[start] != -1:
            continue
        stack = [start]
        comp[start] = n_comp
        while stack:
            f = stack.pop()
            for k in range(3):
                a, b = int(faces[f][k]), int(faces[f][(k + 1) % 3])
                for (g_, _dir) in ef[frozenset((a, b))]:
                    if g_ != f and comp[g_] == -1 and signs[g_] == signs[f]:
                        comp[g_] = n_comp
                        stack.append(g_)
        n_comp += 1

    # vertex labels: sign and chi of each closed submesh
    vertices = []
    for ci in range(n_comp):
        fidx = np.nonzero(comp == ci)[0]
        vs = set(int(v) for f in faces[fidx] for v in f)
        es = set()
        for f in faces[fidx]:
            for k in range(3):
                es.add(frozenset((int(f[k]), int(f[(k + 1) % 3]))))
        chi = len(vs) - len(es) + len(fidx)
        vertices.append((int(signs[fidx[0]]), int(chi)))

    # interface edges and their oriented walks
    z_edges = {e: fs for e, fs in ef.items()
               if signs[fs[0][0]] != signs[fs[1][0]]}
    # vertex -> incident interface edges
    incid = {}
    for e in z_edges:
        a, b = tuple(e)
        incid.setdefault(a, []).append(e)
        incid.setdefault(b, []).append(e)
    for v, es in incid.items():
        if len(es) != 2:
            raise GraphError(
                f"non-manifold sign interface at mesh vertex {v}")

    markers = {}
    for (a, b), tau in disc.tangency_markers:
        markers[frozenset((int(a), int(b)))] = int(tau)

    edges = []
    visited = set()
    for e0 in z_edges:
        if e0 in visited:
            continue
        # orient each interface edge by its positive face: the plus face
        # contains the directed edge (a -> b) in its CCW cycle
        def plus_dir(e):
            for fi, (a, b) in z_edges[e]:
                if signs[fi] == 1:
                    return (a, b), fi
            raise GraphError("interface edge without positive face")

        walk = []
        e = e0
        (a, b), fplus = plus_dir(e)
        start = a
        while True:
            visited.add(e)
            walk.append((e, (a, b)))
            nxt = [ee for ee in incid[b] if ee != e]
            if not nxt:
                raise GraphError("interface walk broke (open curve)")
            e = nxt[0]
            (a2, b2), _ = plus_dir(e)
            if a2 != b:
                raise GraphError("inconsistent interface orientation")
            a, b = a2, b2
            if a == start and e == e0:
                break
            if e in visited and e != e0:
                raise GraphError("interface walk revisited an edge")
            if a == start:
                visited.add(e)
                walk.append((e, (a, b)))
                break
        label = tuple(markers[e] for e, _dir in walk
                      if e in markers)
        # adjacent components
        fi1, fi2 = z_edges[e0][0][0], z_edges[e0][1][0]
        c1, c2 = int(comp[fi1]), int(comp[fi2])
        if signs[fi1] == 1:
            plus_c, minus_c = c1, c2
        else:
            plus_c, minus_c = c2, c1
        edges.append(Edge((plus_c, minus_c), label))
    return LabelledGraph(vertices, edges)


# ---------------------------------------------------------------------------
# mesh builders
# ---------------------------------------------------------------------------

def torus_mesh(n, m, sign_fn, markers=()):
    """Periodic n x m grid on [0,1)^2, two CCW triangles per cell.

    sign_fn maps (k, 2) points in [0,1)^2 to +-1 per face centroid.
    """
    def vid(i, j):
        return (i % n) * m + (j % m)

    faces = []
    cents = []
    for i in range(n):
        for j in range(m):
            x0, y0 = i / n, j / m
            x1, y1 = (i + 1) / n, (j + 1) / m
            faces.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            cents.append(((x0 + x1 + x1) / 3, (y0 + y0 + y1) / 3))
            faces.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
            cents.append(((x0 + x1 + x0) / 3, (y0 + y1 + y1) / 3))
    sgn = np.asarray(sign_fn(np.array(cents)), dtype=int)
    return SurfaceDiscretization(n * m, np.array(faces), sgn, list(markers))


def sphere2_mesh(model=None, n_rings=24, n_theta=48):
    """Stitched two-chart triangulation of the sphere model.

    Each chart carries a polar mesh of its closed unit disk (a hemisphere);
    rim vertices are identified through the transition (theta -> -theta).
    Face signs come from the model's area_sign at centroids (chart-aware).
    """
    from .models import sphere2 as sphere2_model
    if model is None:
        model = sphere2_model()

    # vertex ids: center0, rings chart0, shared rim, rings chart1, center1
    radii = np.linspace(0.0, 1.0, n_rings + 1)[1:]
    thetas = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)

    coords = {}   # vid -> (chart, x, y); rim stored in chart-0 coordinates
    vid = 0
    center = {0: None, 1: None}
    ring_ids = {0: [], 1: []}
    for chart in (0, 1):
        center[chart] = vid
        coords[vid] = (chart, 0.0, 0.0)
        vid += 1
        n_inner = len(radii) - 1  # innermost rings per chart; rim is shared
        rings = []
        for r in radii[:-1]:
            row = []
            for th in thetas:
                coords[vid] = (chart, r * np.cos(th), r * np.sin(th))
                row.append(vid)
                vid += 1
            rings.append(row)
        ring_ids[chart] = rings
    rim = []
    for th in thetas:
        coords[vid] = (0, np.cos(th), np.sin(th))
        rim.append(vid)
        vid += 1

    def rim_index_for_chart(k, chart):
        # chart-1 angle of rim vertex k is -theta_k
        return k if chart == 0 else (-k) % n_theta

    faces = []

    def add_fan(center_id, ring, reverse):
        for k in range(n_theta):
            a = ring[k]
            b = ring[(k + 1) % n_theta]
            tri = (center_id, a, b) if not reverse else (center_id, b, a)
            faces.append(tri)

    def add_band(inner, outer, reverse):
        for k in range(n_theta):
            a, b = inner[k], inner[(k + 1) % n_theta]
            c, d = outer[k], outer[(k + 1) % n_theta]
            if not reverse:
                faces.append((a, c, d))
                faces.append((a, d, b))
            else:
                faces.append((a, d, c))
                faces.append((a, b, d))

    for chart in (0, 1):
        # both charts keep their local CCW orientation: the transition's
        # angle reversal already makes the rim directions opposite
        reverse = False
        rings = ring_ids[chart]
        rim_for_chart = [rim[rim_index_for_chart(k, chart)]
                         for k in range(n_theta)]
        if rings:
            add_fan(center[chart], rings[0], reverse)
            for r0, r1 in zip(rings[:-1], rings[1:]):
                add_band(r0, r1, reverse)
            add_band(rings[-1], rim_for_chart, reverse)
        else:
            add_fan(center[chart], rim_for_chart, reverse)

    faces = np.asarray(faces, dtype=int)
    # face signs from centroids in the owning chart
    signs = np.empty(len(faces), dtype=int)
    pos = np.array([[coords[v][1], coords[v][2]] for v in range(vid)])
    owner = np.array([coords[v][0] for v in range(vid)])
    for fi, f in enumerate(faces):
        charts = owner[f]
        chart = 1 if np.all(charts == 1) else 0
        pts = []
        for v in f:
            c, x, y = coords[v]
            if c != chart:  # rim vertex seen from chart 1
                w = model.transition(np.array([x, y]), 0, 1)
                pts.append(w)
            else:
                pts.append(np.array([x, y]))
        cen = np.mean(pts, axis=0)
        s = model.area_sign(cen, chart)
        signs[fi] = int(np.sign(s)) if s != 0 else 1
    return SurfaceDiscretization(vid, faces, signs)
