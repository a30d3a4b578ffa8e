"""Slot engine for the saturated DCF simulator.

All times are integer nanoseconds so that idle + busy time adds up exactly.
Randomness comes from a caller-supplied buffer of uniforms; the kernel
returns ``NEED_UNIFORMS`` when the buffer may run dry mid-event and the
caller refills it and calls again. This keeps the jitted and the pure-Python
paths bit-identical.
"""
import numpy as np

from .._accel import maybe_njit

DONE = 0
NEED_UNIFORMS = 1
TRACE_FULL = 2

IDLE = 0
SUCCESS = 1
COLLISION = 2
ERROR_LOSS = 3

# indices into the float64 ``params`` vector
P_SLOT, P_SIFS, P_DIFS, P_ACK, P_ACK_TIMEOUT, P_PREAMBLE, P_MPDU, P_CW_MIN, P_CW_MAX, P_SUCCESS_PROB = range(10)
N_PARAMS = 10

# indices into the int64 ``clock`` vector
C_NOW, C_CARRY, C_CARRY_BUSY, C_CURSOR, C_SLOT_INDEX, C_TRACE_N = range(6)
N_CLOCK = 6

# indices into the int64 period accumulator ``acc``
(A_IDLE_NS, A_BUSY_NS, A_DELIVERED, A_COLLISIONS, A_SUCCESSES, A_ERROR_LOSSES,
 A_DELAY_SUM_NS, A_IDLE_SLOTS, A_EVENTS) = range(9)
N_ACC = 9


def _run_slots(counter, cw, stage, controlled, agg, hol_ns, tx_count, ack_count,
               uniforms, clock, params, end_ns, acc, trace):
    n = counter.shape[0]
    slot_ns = np.int64(params[P_SLOT])
    overhead_ns = np.int64(params[P_SIFS] + params[P_ACK] + params[P_DIFS])
    collision_tail_ns = np.int64(params[P_ACK_TIMEOUT] + params[P_DIFS])
    preamble = params[P_PREAMBLE]
    mpdu = params[P_MPDU]
    cw_min = np.int64(params[P_CW_MIN])
    cw_max = np.int64(params[P_CW_MAX])
    p_ok = params[P_SUCCESS_PROB]
    max_agg = np.int64(0)
    for i in range(n):
        if agg[i] > max_agg:
            max_agg = agg[i]
    n_uni = uniforms.shape[0]
    trace_cap = trace.shape[0]

    while True:
        # finish whatever event is still occupying the channel
        carry = clock[C_CARRY]
        if carry > 0:
            room = end_ns - clock[C_NOW]
            used = carry if carry <= room else room
            if clock[C_CARRY_BUSY] == 1:
                acc[A_BUSY_NS] += used
            else:
                acc[A_IDLE_NS] += used
            clock[C_NOW] += used
            clock[C_CARRY] = carry - used
        if clock[C_NOW] >= end_ns:
            return DONE
        cur = clock[C_CURSOR]
        if cur + n + max_agg > n_uni:
            return NEED_UNIFORMS
        if trace_cap > 0 and clock[C_TRACE_N] >= trace_cap:
            return TRACE_FULL

        now = clock[C_NOW]
        ntx = 0
        first = -1
        for i in range(n):
            if counter[i] == 0:
                ntx += 1
                if first < 0:
                    first = i

        outcome = IDLE
        who = -1
        length = 0
        if ntx == 0:
            for i in range(n):
                counter[i] -= 1
            clock[C_CARRY] = slot_ns
            clock[C_CARRY_BUSY] = 0
            acc[A_IDLE_SLOTS] += 1
        elif ntx == 1:
            i = first
            who = i
            length = agg[i]
            tx_count[i] += 1
            delivered = 0
            for k in range(length):
                if uniforms[cur] < p_ok:
                    delivered += 1
                cur += 1
            dur = np.int64(np.rint(preamble + length * mpdu)) + overhead_ns
            if delivered > 0:
                outcome = SUCCESS
                ack_count[i] += 1
                acc[A_SUCCESSES] += 1
                acc[A_DELIVERED] += delivered
                acc[A_DELAY_SUM_NS] += now + dur - hol_ns[i]
                hol_ns[i] = now + dur
                if controlled[i] == 0:
                    stage[i] = 0
                    cw[i] = cw_min
            else:
                outcome = ERROR_LOSS
                acc[A_ERROR_LOSSES] += 1
                if controlled[i] == 0:
                    stage[i] += 1
                    nxt = (cw_min + 1) * (np.int64(1) << min(stage[i], 30)) - 1
                    cw[i] = nxt if nxt < cw_max else cw_max
            counter[i] = np.int64(uniforms[cur] * (cw[i] + 1))
            cur += 1
            clock[C_CARRY] = dur
            clock[C_CARRY_BUSY] = 1
        else:
            outcome = COLLISION
            acc[A_COLLISIONS] += 1
            longest = np.int64(0)
            for i in range(n):
                if counter[i] == 0:
                    tx_count[i] += 1
                    d = np.int64(np.rint(preamble + agg[i] * mpdu))
                    if d > longest:
                        longest = d
                    if controlled[i] == 0:
                        stage[i] += 1
                        nxt = (cw_min + 1) * (np.int64(1) << min(stage[i], 30)) - 1
                        cw[i] = nxt if nxt < cw_max else cw_max
                    counter[i] = np.int64(uniforms[cur] * (cw[i] + 1))
                    cur += 1
            clock[C_CARRY] = longest + collision_tail_ns
            clock[C_CARRY_BUSY] = 1
        if trace_cap > 0:
            row = clock[C_TRACE_N]
            trace[row, 0] = clock[C_SLOT_INDEX]
            trace[row, 1] = outcome
            trace[row, 2] = who
            trace[row, 3] = length
            clock[C_TRACE_N] = row + 1
        clock[C_CURSOR] = cur
        clock[C_SLOT_INDEX] += 1
        acc[A_EVENTS] += 1


run_slots = maybe_njit(_run_slots)
