"""Binary POI-by-trajectory incidence structure.

Vertices are POIs, hyperedges are trajectories (all of them: train, valid
and test — test trajectories join the graph as unlabeled hyperedges).  The
incidence is stored as a CSR over POIs plus a CSC mirror over trajectories;
degrees always come from the binary incidence, even when propagation runs
with attention-weighted values.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import HypergraphError


@dataclass
class TrajectoryHypergraph:
    n_pois: int
    n_trajs: int
    indptr: np.ndarray  # (L+1,) CSR row pointers
    cols: np.ndarray  # (nnz,) trajectory index per nonzero, CSR order
    rows: np.ndarray  # (nnz,) POI index per nonzero (matches indptr)
    col_indptr: np.ndarray  # (N+1,) CSC column pointers
    col_pois: np.ndarray  # (nnz,) POI index per nonzero, CSC order
    vertex_degree: np.ndarray  # (L,) trajectories per POI, binary incidence
    edge_degree: np.ndarray  # (N,) distinct POIs per trajectory
    d_isqrt: np.ndarray
    b_inv: np.ndarray

    @property
    def nnz(self):
        return self.cols.shape[0]

    def apply_normalized(self, x, vals=None):
        """Symmetrically normalized propagation of vertex features.

        Computes D^{-1/2} H B^{-1} H^T D^{-1/2} x in two sparse passes
        (POIs -> trajectories -> POIs).  ``vals`` replaces the binary
        nonzeros (e.g. attention weights) but must live on H's sparsity;
        D and B stay the binary degrees regardless.
        """
        if x.shape[0] != self.n_pois:
            raise HypergraphError(
                f"feature rows {x.shape[0]} != POI count {self.n_pois}"
            )
        if vals is None:
            vals = np.ones(self.nnz)
        elif vals.shape != (self.nnz,):
            raise HypergraphError("values do not match the incidence sparsity")
        y, _, _ = kernels.hyperop_forward(
            self.indptr, self.cols, self.rows, vals, self.d_isqrt, self.b_inv, x
        )
        return y

    def trajectory_sums(self, x):
        """H^T x with binary H: per-trajectory sum of its distinct POI rows."""
        return np.add.reduceat(x[self.col_pois], self.col_indptr[:-1], axis=0)

    def scatter_columns(self, vals, x):
        """H_w^T x for weighted nonzeros ``vals`` (CSR order)."""
        out = np.zeros((self.n_trajs, x.shape[1]))
        np.add.at(out, self.cols, vals[:, None] * x[self.rows])
        return out

    def write_edge_list(self, path):
        """Debug dump: sorted ``poi_index<TAB>traj_index`` pairs."""
        pairs = sorted(zip(self.rows.tolist(), self.cols.tolist()))
        with open(path, "w", encoding="utf-8") as fh:
            for i, j in pairs:
                fh.write(f"{i}\t{j}\n")


def build_hypergraph(traj_poi_lists, n_pois):
    """Build the incidence from per-trajectory POI index lists.

    Repeated visits inside one trajectory still yield a single binary
    nonzero.  Every trajectory must be non-empty and every POI index must
    fall in [0, n_pois); every POI must appear in at least one trajectory
    (degrees are used as inverse normalizers).
    """
    n_trajs = len(traj_poi_lists)
    if n_trajs == 0:
        raise HypergraphError("no trajectories")
    col_indptr = np.zeros(n_trajs + 1, dtype=np.int64)
    col_chunks = []
    for j, pois in enumerate(traj_poi_lists):
        if len(pois) == 0:
            raise HypergraphError(f"trajectory {j} has no POIs")
        distinct = np.unique(np.asarray(pois, dtype=np.int64))
        if distinct[0] < 0 or distinct[-1] >= n_pois:
            raise HypergraphError(
                f"trajectory {j} references POI outside [0, {n_pois})"
            )
        col_chunks.append(distinct)
        col_indptr[j + 1] = col_indptr[j] + distinct.shape[0]
    col_pois = np.concatenate(col_chunks)

    vertex_degree = np.bincount(col_pois, minlength=n_pois).astype(np.float64)
    if np.any(vertex_degree == 0):
        missing = int(np.flatnonzero(vertex_degree == 0)[0])
        raise HypergraphError(f"POI {missing} appears in no trajectory")
    edge_degree = np.diff(col_indptr).astype(np.float64)

    # CSC -> CSR: stable sort nonzeros by POI, trajectory order preserved.
    csc_traj = np.repeat(np.arange(n_trajs, dtype=np.int64), np.diff(col_indptr))
    order = np.argsort(col_pois, kind="stable")
    rows = col_pois[order]
    cols = csc_traj[order]
    indptr = np.zeros(n_pois + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_pois), out=indptr[1:])

    return TrajectoryHypergraph(
        n_pois=n_pois,
        n_trajs=n_trajs,
        indptr=indptr,
        cols=cols,
        rows=rows,
        col_indptr=col_indptr,
        col_pois=col_pois,
        vertex_degree=vertex_degree,
        edge_degree=edge_degree,
        d_isqrt=1.0 / np.sqrt(vertex_degree),
        b_inv=1.0 / edge_degree,
    )
