"""Shared fixtures and generators for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

import _golden as golden
from poset_h2 import (
    BlockPartition,
    PlantData,
    Poset,
    build_poset,
    hautus_stabilizable,
    validate_plant,
)


def make_diamond_poset() -> Poset:
    return build_poset(golden.ELEMENTS, golden.HASSE_EDGES)


def make_diamond_plant() -> PlantData:
    poset = make_diamond_poset()
    partition = BlockPartition(
        state_dims=(1, 1, 1, 1), input_dims=(1, 1, 1, 1), output_dim=8
    )
    return validate_plant(
        poset, partition, golden.A, golden.B, golden.C, golden.D, golden.F
    )


@pytest.fixture(scope="session")
def diamond_plant() -> PlantData:
    return make_diamond_plant()


@pytest.fixture(scope="session")
def diamond_result(diamond_plant):
    from poset_h2 import synthesize

    return synthesize(diamond_plant)


def random_poset(rng: np.random.Generator, p: int) -> Poset:
    """Random order relation on p labeled nodes (edges only point forward)."""
    elements = [str(k + 1) for k in range(p)]
    edges = []
    for i in range(p):
        for j in range(i + 1, p):
            if rng.random() < 0.45:
                edges.append((elements[i], elements[j]))
    return build_poset(elements, edges)


def random_riccati_instance(rng: np.random.Generator, n_max: int = 8):
    """Random stabilizable data with zero cross term and PD input weight."""
    while True:
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, 3))
        A = rng.normal(size=(n, n)) * 0.8
        B = rng.normal(size=(n, m))
        if not hautus_stabilizable(A, B):
            continue
        Cx = rng.normal(size=(n, n)) * 0.5 + np.eye(n)
        C = np.vstack([Cx, np.zeros((m, n))])
        D = np.vstack([np.zeros((n, m)), np.diag(rng.uniform(0.4, 1.6, m))])
        F = rng.normal(size=(n, int(rng.integers(1, n + 1))))
        return A, B, C, D, F


def random_plant(
    rng: np.random.Generator,
    poset: Poset | None = None,
    p_max: int = 4,
    n_max: int = 2,
    m_max: int = 2,
) -> PlantData:
    """Random plant satisfying every structural assumption.

    The output stacks a full-rank state penalty over a diagonal input
    penalty, which keeps the cross term zero and the input weight positive
    definite by construction.
    """
    if poset is None:
        poset = random_poset(rng, int(rng.integers(1, p_max + 1)))
    p = len(poset)
    state_dims = tuple(int(rng.integers(1, n_max + 1)) for _ in range(p))
    input_dims = tuple(int(rng.integers(1, m_max + 1)) for _ in range(p))
    n, m = sum(state_dims), sum(input_dims)
    so = np.concatenate(([0], np.cumsum(state_dims)))
    io = np.concatenate(([0], np.cumsum(input_dims)))

    def well_conditioned(rows, cols):
        # floor the singular values so no subsystem is close to losing its
        # own actuation (near-degenerate blocks blow the gains up and make
        # absolute tolerances meaningless)
        blk = rng.normal(size=(rows, cols))
        U, S, Vt = np.linalg.svd(blk, full_matrices=False)
        return U @ np.diag(np.maximum(S, 0.4)) @ Vt

    A = np.zeros((n, n))
    B = np.zeros((n, m))
    for i in range(p):
        for j in range(p):
            if not poset.leq[j, i]:
                continue
            blk = rng.normal(size=(state_dims[i], state_dims[j]))
            if i == j:
                blk = blk - (0.2 + rng.random()) * np.eye(state_dims[i])
            A[so[i]:so[i + 1], so[j]:so[j + 1]] = blk
            B[so[i]:so[i + 1], io[j]:io[j + 1]] = (
                well_conditioned(state_dims[i], input_dims[j])
                if i == j
                else rng.normal(size=(state_dims[i], input_dims[j]))
            )
    # Regenerate any diagonal pair that happens to be unstabilizable
    # (probability zero, but the Hautus test is numeric).
    for j in range(p):
        while not hautus_stabilizable(
            A[so[j]:so[j + 1], so[j]:so[j + 1]],
            B[so[j]:so[j + 1], io[j]:io[j + 1]],
        ):
            B[so[j]:so[j + 1], io[j]:io[j + 1]] = well_conditioned(
                state_dims[j], input_dims[j]
            )

    Cx = rng.normal(size=(n, n)) * 0.4 + np.eye(n)
    C = np.vstack([Cx, np.zeros((m, n))])
    Du = np.diag(rng.uniform(0.5, 1.5, size=m))
    D = np.vstack([np.zeros((n, m)), Du])
    F_blocks = [
        rng.normal(size=(d, d)) * 0.2 + np.eye(d) for d in state_dims
    ]
    F = np.zeros((n, n))
    for j in range(p):
        F[so[j]:so[j + 1], so[j]:so[j + 1]] = F_blocks[j]

    partition = BlockPartition(
        state_dims=state_dims, input_dims=input_dims, output_dim=n + m
    )
    return validate_plant(poset, partition, A, B, C, D, F)
