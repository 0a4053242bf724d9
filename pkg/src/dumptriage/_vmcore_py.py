"""Pure-Python interpreter kernel; fallback for the compiled ``_vmcore``.

Both kernels take the flat encoding produced by ``isa._encode`` and must
return identical results.
"""
from array import array

OP_SET, OP_SETX, OP_ADD, OP_SUB, OP_MUL, OP_SHL, OP_SHR = range(7)
OP_JMP, OP_BRZ, OP_BRNZ, OP_LOAD, OP_STORE, OP_PRINT, OP_HALT = range(7, 14)

HALTED, PASTHELD, STEP_LIMIT = 0, 1, 2

_MASK = (1 << 64) - 1
_SIGN = 1 << 63


def _wrap(x):
    x &= _MASK
    return x - (1 << 64) if x & _SIGN else x


def _legal(addr, bases, lasts, keys):
    for i in range(len(bases)):
        if keys[i] == 1 and bases[i] <= addr <= lasts[i]:
            return True
    return False


def run_kernel(code, a, b, c, bimm, init, ext, bases, lasts, keys, step_limit, record):
    regs = list(init)
    memory = {}
    pcs = array("q")
    states = array("q") if record else None
    pc = 0
    steps = 0
    while True:
        if steps >= step_limit:
            return STEP_LIMIT, pcs, states, -1, 0, array("q", regs)
        op = code[pc]
        pcs.append(pc)
        steps += 1
        nxt = pc + 1
        if op == OP_SET:
            regs[a[pc]] = b[pc] if bimm[pc] else regs[b[pc]]
        elif op == OP_SETX:
            regs[a[pc]] = ext[pc]
        elif op <= OP_SHR:
            lhs = regs[a[pc]]
            rhs = b[pc] if bimm[pc] else regs[b[pc]]
            if op == OP_ADD:
                regs[a[pc]] = _wrap(lhs + rhs)
            elif op == OP_SUB:
                regs[a[pc]] = _wrap(lhs - rhs)
            elif op == OP_MUL:
                regs[a[pc]] = _wrap(lhs * rhs)
            elif op == OP_SHL:
                regs[a[pc]] = _wrap(lhs << rhs)
            else:
                regs[a[pc]] = lhs >> rhs
        elif op == OP_JMP:
            nxt = a[pc]
        elif op == OP_BRZ:
            if regs[a[pc]] == 0:
                nxt = b[pc]
        elif op == OP_BRNZ:
            if regs[a[pc]] != 0:
                nxt = b[pc]
        elif op == OP_HALT:
            if record:
                states.extend(regs)
            return HALTED, pcs, states, -1, 0, array("q", regs)
        else:
            if op == OP_LOAD:
                addr = (regs[b[pc]] + c[pc]) & _MASK
            elif op == OP_STORE:
                addr = (regs[a[pc]] + c[pc]) & _MASK
            else:
                addr = regs[a[pc]] & _MASK
            if not _legal(addr, bases, lasts, keys):
                if record:
                    states.extend(regs)
                return PASTHELD, pcs, states, pc, addr, array("q", regs)
            if op == OP_LOAD:
                regs[a[pc]] = memory.get(addr, 0)
            elif op == OP_STORE:
                memory[addr] = regs[b[pc]]
        if record:
            states.extend(regs)
        pc = nxt
