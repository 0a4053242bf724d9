# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled interpreter kernel. Mirrors ``_vmcore_py.run_kernel`` exactly."""
from array import array

ctypedef long long i64
ctypedef unsigned long long u64

cdef enum:
    OP_SET, OP_SETX, OP_ADD, OP_SUB, OP_MUL, OP_SHL, OP_SHR
    OP_JMP, OP_BRZ, OP_BRNZ, OP_LOAD, OP_STORE, OP_PRINT, OP_HALT

HALTED, PASTHELD, STEP_LIMIT = 0, 1, 2


cdef inline bint _legal(u64 addr, const u64[:] bases, const u64[:] lasts,
                        const signed char[:] keys) noexcept:
    cdef Py_ssize_t i
    for i in range(bases.shape[0]):
        if keys[i] == 1 and bases[i] <= addr <= lasts[i]:
            return True
    return False


def run_kernel(code, a, b, c, bimm, init, ext, bases, lasts, keys,
               i64 step_limit, bint record):
    cdef const i64[:] vcode = code
    cdef const i64[:] va = a
    cdef const i64[:] vb = b
    cdef const i64[:] vc = c
    cdef const signed char[:] vbimm = bimm
    cdef const i64[:] vext = ext
    cdef const u64[:] vbases = bases
    cdef const u64[:] vlasts = lasts
    cdef const signed char[:] vkeys = keys

    regs_arr = array("q", init)
    cdef i64[:] regs = regs_arr
    memory = {}
    pcs = array("q")
    states = array("q") if record else None

    cdef Py_ssize_t pc = 0, nxt
    cdef i64 steps = 0
    cdef i64 op, lhs, rhs
    cdef u64 addr
    while True:
        if steps >= step_limit:
            return STEP_LIMIT, pcs, states, -1, 0, regs_arr
        op = vcode[pc]
        pcs.append(pc)
        steps += 1
        nxt = pc + 1
        if op == OP_SET:
            regs[va[pc]] = vb[pc] if vbimm[pc] else regs[vb[pc]]
        elif op == OP_SETX:
            regs[va[pc]] = vext[pc]
        elif op <= OP_SHR:
            lhs = regs[va[pc]]
            rhs = vb[pc] if vbimm[pc] else regs[vb[pc]]
            if op == OP_ADD:
                regs[va[pc]] = <i64>(<u64>lhs + <u64>rhs)
            elif op == OP_SUB:
                regs[va[pc]] = <i64>(<u64>lhs - <u64>rhs)
            elif op == OP_MUL:
                regs[va[pc]] = <i64>(<u64>lhs * <u64>rhs)
            elif op == OP_SHL:
                regs[va[pc]] = <i64>(<u64>lhs << rhs)
            else:
                regs[va[pc]] = lhs >> rhs
        elif op == OP_JMP:
            nxt = va[pc]
        elif op == OP_BRZ:
            if regs[va[pc]] == 0:
                nxt = vb[pc]
        elif op == OP_BRNZ:
            if regs[va[pc]] != 0:
                nxt = vb[pc]
        elif op == OP_HALT:
            if record:
                states.extend(regs_arr)
            return HALTED, pcs, states, -1, 0, regs_arr
        else:
            if op == OP_LOAD:
                addr = <u64>regs[vb[pc]] + <u64>vc[pc]
            elif op == OP_STORE:
                addr = <u64>regs[va[pc]] + <u64>vc[pc]
            else:
                addr = <u64>regs[va[pc]]
            if not _legal(addr, vbases, vlasts, vkeys):
                if record:
                    states.extend(regs_arr)
                return PASTHELD, pcs, states, pc, addr, regs_arr
            if op == OP_LOAD:
                regs[va[pc]] = memory.get(addr, 0)
            elif op == OP_STORE:
                memory[addr] = regs[vb[pc]]
        if record:
            states.extend(regs_arr)
        pc = nxt
