"""Independent reference implementations used only by the tests.

Each one recomputes a result from first principles with a different method
from the package code, so agreement is evidence rather than tautology.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from dumptriage.diagnosis import EVIDENCE_STATES, NO_ERROR, ErrorClass, finding_states


# -- control flow -------------------------------------------------------------------

def successors(program, i: int) -> set[int]:
    """Every pc that can follow instruction i in one step (ignoring faults)."""
    ins = program[i]
    if ins.opcode == "HALT":
        return set()
    if ins.opcode == "JMP":
        return {program.labels[ins.operands[0]]}
    nxt = {i + 1} if i + 1 < len(program) else set()
    if ins.opcode in ("BRZ", "BRNZ"):
        return nxt | {program.labels[ins.operands[1]]}
    return nxt


def brute_leaders(program) -> list[int]:
    """Block starts: entry, anything a control transfer can reach, anything after one."""
    n = len(program)
    control = {j for j in range(n) if program[j].opcode in ("JMP", "BRZ", "BRNZ", "HALT")}
    reached = set()
    for j in control:
        reached |= successors(program, j)
    return [i for i in range(n) if i == 0 or i in reached or (i - 1) in control]


def brute_edges(program) -> set[tuple[int, int]]:
    """(first instr of parent block, first instr of child block) pairs."""
    lead = brute_leaders(program)
    owner = {}
    for k, start in enumerate(lead):
        stop = lead[k + 1] if k + 1 < len(lead) else len(program)
        for i in range(start, stop):
            owner[i] = start
    edges = set()
    for k, start in enumerate(lead):
        last = (lead[k + 1] if k + 1 < len(lead) else len(program)) - 1
        for s in successors(program, last):
            edges.add((start, owner[s]))
    return edges


# -- memory --------------------------------------------------------------------------

def brute_root(dump):
    """(name, address) of the illegal address operand, scanning blocks directly."""
    ins = dump.program[dump.fault.instr_index]
    if ins.opcode == "LOAD":
        name, off = ins.operands[1].base, ins.operands[1].offset
    elif ins.opcode == "STORE":
        name, off = ins.operands[0].base, ins.operands[0].offset
    else:
        name, off = ins.operands[0], 0
    addr = (dump.registers[name] + off) % (1 << 64)
    legal = any(b.protect_key == 1 and b.base <= addr < b.base + b.length for b in dump.memory_map)
    return None if legal else (name, addr)


# -- belief networks -------------------------------------------------------------------

def joint_table(states, parents, rows):
    """Full joint as a numpy array indexed in ``states`` key order.

    ``rows[node]`` lists CPT rows in parent-state product order.
    """
    names = list(states)
    axis = {n: k for k, n in enumerate(names)}
    shape = [len(states[n]) for n in names]
    joint = np.ones(shape)
    for n in names:
        ps = list(parents.get(n, ()))
        cpt = np.asarray(rows[n], dtype=float).reshape([len(states[p]) for p in ps] + [len(states[n])])
        # move the factor's axes into joint-axis order and broadcast
        dims = ps + [n]
        order = sorted(range(len(dims)), key=lambda d: axis[dims[d]])
        factor = np.transpose(cpt, order)
        view = [1] * len(names)
        for d in order:
            view[axis[dims[d]]] = cpt.shape[d]
        joint = joint * factor.reshape(view)
    return names, joint


def joint_posteriors(states, parents, rows, observations):
    names, joint = joint_table(states, parents, rows)
    index = []
    for n in names:
        if n in observations:
            index.append(list(states[n]).index(observations[n]))
        else:
            index.append(slice(None))
    mask = np.zeros_like(joint)
    mask[tuple(index)] = 1.0
    masked = joint * mask
    z = masked.sum()
    if z <= 0:
        return None
    out = {}
    for k, n in enumerate(names):
        others = tuple(d for d in range(len(names)) if d != k)
        marg = masked.sum(axis=others) / z
        out[n] = dict(zip(states[n], marg.tolist()))
    return out


# -- single-fault scorer -----------------------------------------------------------------

def brute_scores(findings, model):
    """(path posteriors, per-path class breakdown) by direct n x 4 enumeration."""
    n = len(findings)
    classes = list(ErrorClass)

    def lik(f, hyp):
        st = finding_states(f)
        return math.prod(
            model.cpts[node][hyp][EVIDENCE_STATES[node].index(st[node])] for node in st
        )

    bg = np.array([lik(f, NO_ERROR) for f in findings])
    w = np.zeros((n, len(classes)))
    for i, f in enumerate(findings):
        rest = np.prod(np.delete(bg, i))
        for k, c in enumerate(classes):
            w[i, k] = (1.0 / n) * model.priors[c] * lik(f, c.value) * rest
    z = w.sum()
    if z == 0:
        return None
    w /= z
    return w.sum(axis=1), w


def product_states(states):
    return itertools.product(*states.values())
