"""Node-id keyed embedding matrices and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class EmbeddingMatrix:
    node_ids: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.node_ids = np.asarray(self.node_ids, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or len(self.vectors) != len(self.node_ids):
            raise ValueError("vectors must be (n_nodes, d) aligned with node_ids")
        self.index = {int(v): i for i, v in enumerate(self.node_ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.node_ids)

    def __contains__(self, node_id):
        return int(node_id) in self.index

    def __getitem__(self, node_id) -> np.ndarray:
        return self.vectors[self.index[int(node_id)]]

    def lookup(self, node_ids) -> np.ndarray:
        return self.vectors[[self.index[int(v)] for v in node_ids]]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id"] + [f"dim_{j}" for j in range(self.dim)])
            for nid, row in zip(self.node_ids.tolist(), self.vectors):
                w.writerow([nid] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "EmbeddingMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = len(header) - 1
            ids, rows = [], []
            for row in reader:
                if row:
                    ids.append(int(row[0]))
                    rows.append([float(x) for x in row[1:]])
        return cls(np.array(ids, dtype=np.int64), np.array(rows, dtype=np.float64).reshape(len(ids), d))
