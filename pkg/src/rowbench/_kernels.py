"""Hot numeric kernels over the flat state/observation encodings.

Every function here is written in a numba-compatible subset of Python and is
jitted by default. Setting the environment variable ``ROWBENCH_NO_NUMBA=1``
before import selects the pure-Python/numpy fallback path instead (same
source, interpreted); ``benchmarks/bench_kernels.py`` compares the two.

All randomness is passed in as pre-drawn uniform/normal arrays so a kernel
call is a pure function of its arguments.
"""
from __future__ import annotations

import math
import os

import numpy as np

from . import _layout as L
from .domain import conflict_table

USE_NUMBA = os.environ.get("ROWBENCH_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    import numba

    def _jit(f):
        return numba.njit(cache=True)(f)

else:

    def _jit(f):
        return f


CONFLICT = conflict_table().astype(np.int8)
INTENT_CUE = L.INTENT_CUE.copy()

# action codes (mirror domain.Action; plain ints for the jitted code)
STOP, YIELD, GO = 0, 1, 2
APPR, ATLINE, INBOX, CLEARED = 0, 1, 2, 3

_NO_PED_ADD = np.zeros(4)

# re-export layout constants locally so the kernels close over plain ints
_SO = L.S_OTHER0
_ST = L.S_OTHER_STRIDE


@_jit
def _occ_dur(intent):
    return 3 if intent == 1 else 2


@_jit
def _exit_side(approach, intent):
    if intent == 0:
        return (approach + 2) % 4
    if intent == 1:
        return (approach + 1) % 4
    return (approach + 3) % 4


@_jit
def _veh(s, vidx):
    """(present, approach, intent, dist, nominal, phase, rank, eta, compliant)."""
    if vidx < 0:
        return (
            1.0,
            int(s[0]),
            int(s[1]),
            s[2],
            s[4],
            int(s[5]),
            s[7],
            s[8],
            1.0,
        )
    b = _SO + vidx * _ST
    return (
        s[b + 0],
        int(s[b + 1]),
        int(s[b + 2]),
        s[b + 3],
        s[b + 5],
        int(s[b + 6]),
        s[b + 8],
        s[b + 9],
        s[b + 10],
    )


@_jit
def oracle_action_core(s, vidx, ped_add, ignore_compliance):
    """Right-of-way cascade for vehicle ``vidx`` (-1 = ego) on the true state.

    ``ped_add`` carries pedestrian arrivals scheduled for the next step so the
    cascade can anticipate mid-episode intrusions; pass zeros when the future
    schedule is unknown. ``ignore_compliance`` drops the stop-runner rule,
    which turns the cascade into the rule-book view a naive driver has.
    """
    pres_v, av, iv, dv, nv, phv, rank_v, eta_v, _ = _veh(s, vidx)
    if phv >= INBOX:
        return GO
    occ_v = _occ_dur(iv)
    tta_v = 0.0 if phv == ATLINE else dv / max(nv, 1e-9)

    # pedestrian on this vehicle's path, now or at the moment of entry
    en = av
    ex = _exit_side(av, iv)
    ped_now = s[L.S_PED_PRESENT + en] > 0.5 or s[L.S_PED_PRESENT + ex] > 0.5
    ped_next = (
        s[L.S_PED_STEPS + en] > 1.5
        or s[L.S_PED_STEPS + ex] > 1.5
        or ped_add[en] > 0.5
        or ped_add[ex] > 0.5
    )
    if ped_now or (tta_v <= 1.5 and ped_next):
        return STOP

    runner = False
    earlier = False
    earlier_in_box = False
    tie_right = False
    left_cross = False
    for j in range(-1, L.MAX_OTHERS):
        if j == vidx:
            continue
        pres, aj, ij, dj, nj, phj, rank_j, eta_j, comp_j = _veh(s, j)
        if pres < 0.5 or phj >= CLEARED:
            continue
        if CONFLICT[av * 3 + iv, aj * 3 + ij] == 0:
            continue
        in_box_j = phj == INBOX
        tta_j = 0.0 if phj >= ATLINE else dj / max(nj, 1e-9)
        occ_j = _occ_dur(ij)
        overlap = in_box_j or (
            tta_j <= tta_v + occ_v + 1.0 and tta_v <= tta_j + occ_j + 1.0
        )
        if comp_j < 0.5 and not ignore_compliance and overlap:
            runner = True
        if rank_j < rank_v and eta_j < eta_v - 0.5:
            earlier = True
            if in_box_j:
                earlier_in_box = True
        if abs(eta_j - eta_v) <= 0.5 and aj == (av + 3) % 4:
            tie_right = True
        if iv == 1 and aj == (av + 2) % 4 and ij != 1 and overlap:
            left_cross = True
    if runner:
        return YIELD
    if earlier:
        if phv == ATLINE and earlier_in_box:
            return STOP
        return YIELD
    if tie_right:
        return YIELD
    if left_cross:
        return YIELD
    return GO


@_jit
def step_core(s, action, u, ped_add, brake_fail_p, generative, hazard_p, gen_dur):
    """One environment step. Returns a fresh state vector.

    ``u`` is a uniform block of ``STEP_DRAWS`` draws; ``ped_add[a] > 0`` seeds
    a pedestrian of that duration on approach ``a`` this step. In generative
    mode pedestrians instead appear with per-step probability ``hazard_p``.
    """
    ns = s.copy()
    ns[L.S_TIMESTEP] = s[L.S_TIMESTEP] + 1.0

    for a in range(4):
        st = s[L.S_PED_STEPS + a]
        if st > 0.0:
            st -= 1.0
        add = ped_add[a]
        if generative == 1 and add <= 0.0 and st <= 0.0:
            if u[1 + a] < hazard_p:
                add = gen_dur
        if add > 0.0:
            st = add
        ns[L.S_PED_STEPS + a] = st
        ns[L.S_PED_PRESENT + a] = 1.0 if st > 0.0 else 0.0

    # decisions for compliant other vehicles, from the pre-move state
    decisions = np.empty(L.MAX_OTHERS, dtype=np.int64)
    for j in range(L.MAX_OTHERS):
        b = _SO + j * _ST
        if s[b + 0] > 0.5 and s[b + 6] < INBOX:
            decisions[j] = oracle_action_core(s, j, ped_add, 0)
        else:
            decisions[j] = GO
    ego_pending = oracle_action_core(s, -1, ped_add, 0) != GO

    # vehicles inside the box progress while driven; braking there stalls the
    # ego mid-crossing (and leaves it exposed)
    if s[L.S_EGO_PHASE] == INBOX and action == GO:
        occ = ns[L.S_EGO_OCC] - 1.0
        ns[L.S_EGO_OCC] = occ
        if occ <= 0.0:
            ns[L.S_EGO_PHASE] = CLEARED
            ns[L.S_EGO_OCC] = 0.0
    for j in range(L.MAX_OTHERS):
        b = _SO + j * _ST
        if s[b + 0] > 0.5 and s[b + 6] == INBOX:
            occ = ns[b + 7] - 1.0
            ns[b + 7] = occ
            if occ <= 0.0:
                ns[b + 6] = CLEARED
                ns[b + 7] = 0.0

    # other vehicles move
    for j in range(L.MAX_OTHERS):
        b = _SO + j * _ST
        if s[b + 0] < 0.5 or ns[b + 6] >= INBOX:
            continue
        nom = s[b + 5]
        dist = s[b + 3]
        comp = s[b + 10] > 0.5
        if (not comp) or decisions[j] == GO:
            nd = dist - nom
            if nd <= 1e-9:
                ns[b + 3] = 0.0
                ns[b + 6] = INBOX
                ns[b + 7] = _occ_dur(int(s[b + 2]))
                ns[b + 4] = nom
            else:
                ns[b + 3] = nd
                ns[b + 4] = nom
                ns[b + 6] = APPR
        else:
            nd = dist - 0.5 * nom
            if nd <= 1e-9:
                ns[b + 3] = 0.0
                ns[b + 4] = 0.0
                ns[b + 6] = ATLINE
            else:
                ns[b + 3] = nd
                ns[b + 4] = 0.5 * nom
                ns[b + 6] = APPR

    # ego moves per the commanded action
    ego_entered = False
    if s[L.S_EGO_PHASE] < INBOX:
        nom = s[L.S_EGO_NOMINAL]
        dist = s[L.S_EGO_DIST]
        adv = 0.0
        may_enter = False
        if action == GO:
            adv = nom
            may_enter = True
        elif action == YIELD:
            adv = 0.5 * nom
            may_enter = not ego_pending
        else:
            if s[L.S_SLIPPERY] > 0.5 and u[0] < brake_fail_p:
                adv = nom  # brakes fail on ice: skid one step's travel
                may_enter = True
        nd = dist - adv
        if nd <= 1e-9:
            if may_enter:
                ns[L.S_EGO_DIST] = 0.0
                ns[L.S_EGO_PHASE] = INBOX
                ns[L.S_EGO_OCC] = _occ_dur(int(s[L.S_EGO_INTENT]))
                ns[L.S_EGO_SPEED] = adv
                ego_entered = True
            else:
                ns[L.S_EGO_DIST] = 0.0
                ns[L.S_EGO_PHASE] = ATLINE
                ns[L.S_EGO_SPEED] = 0.0
        else:
            ns[L.S_EGO_DIST] = nd
            ns[L.S_EGO_SPEED] = adv
            ns[L.S_EGO_PHASE] = APPR

    # collisions involving the ego
    if ns[L.S_EGO_PHASE] == INBOX:
        ea = int(s[L.S_EGO_APPROACH])
        ei = int(s[L.S_EGO_INTENT])
        for j in range(L.MAX_OTHERS):
            b = _SO + j * _ST
            if s[b + 0] > 0.5 and ns[b + 6] == INBOX:
                if CONFLICT[ea * 3 + ei, int(s[b + 1]) * 3 + int(s[b + 2])] == 1:
                    ns[L.S_COLLISION] = 1.0
        if ego_entered:
            # a pedestrian stepping off the curb this instant is not yet in
            # the lane, so only crossings active before the move count
            ex = _exit_side(ea, ei)
            if s[L.S_PED_PRESENT + ea] > 0.5 or s[L.S_PED_PRESENT + ex] > 0.5:
                ns[L.S_COLLISION] = 1.0

    if generative == 1:
        # model states re-estimate scheduled arrivals from current kinematics
        # (frozen once a vehicle reaches the line) and re-derive the arrival
        # order from them; the true environment keeps the original
        # announcement order instead
        # arrival slots are announced once; re-estimation only corrects the
        # initial speed ignorance. The ego's slot is exact from the start and
        # is never touched. A refreshed other-vehicle estimate may only move
        # earlier (plus jitter slack): slowing delays actual arrival, never
        # the announced slot, so a post-stop re-estimate must not stick.
        t1 = ns[L.S_TIMESTEP]
        for j in range(L.MAX_OTHERS):
            b = _SO + j * _ST
            if s[b + 0] > 0.5 and ns[b + 6] == APPR:
                full = ns[b + 4] >= ns[b + 5] - 1e-9
                # roughening keeps speed hypotheses alive across resampling
                nom = ns[b + 5] + (u[5 + j] - 0.5) * 0.06
                if nom < 0.5:
                    nom = 0.5
                ns[b + 5] = nom
                if full:
                    ns[b + 4] = nom
                    cand = t1 + ns[b + 3] / nom
                    if cand <= ns[b + 9] + 0.3:
                        ns[b + 9] = cand
                # compliance is only identified through behaviour; refresh the
                # hypothesis only while it forks that behaviour (the vehicle
                # is supposed to be yielding), where the next range reading
                # immediately scores it. The inject rate is kept well below
                # the decay rate so unprovable runner mass stays a tail
                if decisions[j] != GO:
                    if ns[b + 10] > 0.5:
                        if u[9 + j] < 0.003:
                            ns[b + 10] = 0.0
                    elif u[9 + j] < 0.012:
                        ns[b + 10] = 1.0
        ns[L.S_EGO_RANK] = 0.0
        for j in range(L.MAX_OTHERS):
            ns[_SO + j * _ST + 8] = 0.0
        rank = 1.0
        for _ in range(1 + L.MAX_OTHERS):
            best_j = -2
            best_eta = 1e18
            if ns[L.S_EGO_RANK] < 0.5 and ns[L.S_EGO_ETA] < best_eta:
                best_j = -1
                best_eta = ns[L.S_EGO_ETA]
            for j in range(L.MAX_OTHERS):
                b = _SO + j * _ST
                if ns[b + 0] > 0.5 and ns[b + 8] < 0.5 and ns[b + 9] < best_eta:
                    best_j = j
                    best_eta = ns[b + 9]
            if best_j == -2:
                break
            if best_j == -1:
                ns[L.S_EGO_RANK] = rank
            else:
                ns[_SO + best_j * _ST + 8] = rank
            rank += 1.0
    return ns


@_jit
def observe_core(s, u, n, dropout_p, occlusion_p, sigma_d, sigma_cue):
    """Noisy partial observation of ``s``. ``u``/``n`` are uniform and normal
    draw blocks of sizes OBS_U_DRAWS / OBS_N_DRAWS."""
    o = np.zeros(L.OBS_SIZE)
    o[L.O_TIMESTEP] = s[L.S_TIMESTEP]
    o[L.O_EGO_DIST] = s[L.S_EGO_DIST]
    o[L.O_EGO_PHASE] = s[L.S_EGO_PHASE]
    o[L.O_EGO_SPEED] = s[L.S_EGO_SPEED]
    if u[0] < dropout_p:
        o[L.O_DROPPED] = 1.0
        for a in range(4):
            o[L.O_PED + a] = -1.0
        return o
    for j in range(L.MAX_OTHERS):
        b = _SO + j * _ST
        ob = L.O_VEH0 + j * L.O_VEH_STRIDE
        if s[b + 0] < 0.5 or s[b + 6] >= CLEARED:
            continue
        if u[1 + j] < occlusion_p:
            continue
        o[ob + L.OB_VISIBLE] = 1.0
        o[ob + L.OB_APPROACH] = s[b + 1]
        d = s[b + 3] + n[j] * sigma_d
        o[ob + L.OB_DIST] = d if d > 0.0 else 0.0
        perturb = -1.0 if u[4 + j] < 0.1 else (1.0 if u[4 + j] > 0.9 else 0.0)
        r = s[b + 8] + perturb
        o[ob + L.OB_RANK] = r if r >= 1.0 else 1.0
        o[ob + L.OB_PHASE] = s[b + 6]
        o[ob + L.OB_CUE] = INTENT_CUE[int(s[b + 2])] + n[3 + j] * sigma_cue
    for a in range(4):
        if u[7 + a] < occlusion_p:
            o[L.O_PED + a] = -1.0
        else:
            o[L.O_PED + a] = 1.0 if s[L.S_PED_PRESENT + a] > 0.5 else 0.0
    return o


@_jit
def reward_core(s_prev, action, s_new, oracle_a, cpen, upen, prog, scost):
    r = scost
    if s_new[L.S_COLLISION] > 0.5 and s_prev[L.S_COLLISION] < 0.5:
        r += cpen
    if action == GO and oracle_a == STOP:
        r += upen
    dphase = s_new[L.S_EGO_PHASE] - s_prev[L.S_EGO_PHASE]
    if dphase > 0.0 and s_new[L.S_COLLISION] < 0.5:
        r += prog * dphase
    return r


@_jit
def is_terminal_core(s, horizon):
    return (
        s[L.S_COLLISION] > 0.5
        or s[L.S_EGO_PHASE] == CLEARED
        or s[L.S_TIMESTEP] >= horizon
    )


@_jit
def step_batch(P, action, U, brake_fail_p, hazard_p, gen_dur):
    """Advance a particle matrix one step under the generative model."""
    out = np.empty_like(P)
    zero = np.zeros(4)
    for k in range(P.shape[0]):
        out[k] = step_core(P[k], action, U[k], zero, brake_fail_p, 1, hazard_p, gen_dur)
    return out


@_jit
def likelihood_batch(P, o, sigma_d, sigma_cue):
    """Observation likelihood of ``o`` for each particle row (unnormalized)."""
    n = P.shape[0]
    w = np.ones(n)
    if o[L.O_DROPPED] > 0.5:
        return w
    sd = sigma_d if sigma_d > 1e-3 else 1e-3
    sc = sigma_cue if sigma_cue > 1e-3 else 1e-3
    for k in range(n):
        lik = 1.0
        dd = o[L.O_EGO_DIST] - P[k, L.S_EGO_DIST]
        lik *= math.exp(-dd * dd / 0.5)
        if int(o[L.O_EGO_PHASE]) != int(P[k, L.S_EGO_PHASE]):
            lik *= 0.05
        for j in range(L.MAX_OTHERS):
            ob = L.O_VEH0 + j * L.O_VEH_STRIDE
            b = _SO + j * _ST
            if o[ob + L.OB_VISIBLE] < 0.5:
                continue  # occluded or gone: uninformative
            if P[k, b + 0] < 0.5 or P[k, b + 6] >= CLEARED:
                lik *= 1e-6
                continue
            dd = o[ob + L.OB_DIST] - P[k, b + 3]
            lik *= math.exp(-dd * dd / (2.0 * sd * sd))
            dr = abs(o[ob + L.OB_RANK] - P[k, b + 8])
            if dr <= 0.5:
                lik *= 0.8
            elif dr <= 1.5:
                lik *= 0.1
            else:
                lik *= 1e-3
            if int(o[ob + L.OB_PHASE]) != int(P[k, b + 6]):
                lik *= 0.05
            dc = o[ob + L.OB_CUE] - INTENT_CUE[int(P[k, b + 2])]
            lik *= math.exp(-dc * dc / (2.0 * sc * sc))
        for a in range(4):
            sa = o[L.O_PED + a]
            if sa < -0.5:
                continue
            seen = sa > 0.5
            have = P[k, L.S_PED_PRESENT + a] > 0.5
            lik *= 0.95 if seen == have else 0.05
        w[k] = lik
    return w


@_jit
def systematic_resample(w, u0):
    """Systematic resampling; ``w`` must sum to 1, ``u0`` uniform in [0,1)."""
    n = w.shape[0]
    idx = np.empty(n, dtype=np.int64)
    c = w[0]
    j = 0
    for k in range(n):
        p = (k + u0) / n
        while p > c and j < n - 1:
            j += 1
            c += w[j]
        idx[k] = j
    return idx


@_jit
def rollout_core(
    s,
    max_steps,
    gamma,
    U,
    act_u,
    policy,
    brake_fail_p,
    hazard_p,
    gen_dur,
    horizon,
    cpen,
    upen,
    prog,
    scost,
):
    """Discounted return of a rollout under the generative model.

    ``policy`` 0 = uniform random over actions (draws from ``act_u``),
    1 = rule cascade with compliance flags hidden (the planners' default
    policy). ``U`` is (max_steps, STEP_DRAWS); ``act_u`` is (max_steps,).
    Returns ``(return, collided)`` where ``collided`` is 1.0 when the
    rollout ended in a collision.
    """
    zero = np.zeros(4)
    total = 0.0
    disc = 1.0
    cur = s
    for t in range(max_steps):
        if is_terminal_core(cur, horizon):
            break
        if policy == 0:
            a = int(act_u[t] * 3.0)
            if a > 2:
                a = 2
        else:
            a = oracle_action_core(cur, -1, zero, 1)
        oa = oracle_action_core(cur, -1, zero, 0)
        nxt = step_core(cur, a, U[t], zero, brake_fail_p, 1, hazard_p, gen_dur)
        total += disc * reward_core(cur, a, nxt, oa, cpen, upen, prog, scost)
        disc *= gamma
        cur = nxt
    return total, (1.0 if cur[L.S_COLLISION] > 0.5 else 0.0)


N_COMPACT = 48  # ego phase (4) x priority class (3) x pedestrian (2) x conflict (2)


@_jit
def compact_encode_core(s):
    """Map a full state onto the 48-state compact space used by QMDP:
    ego phase x relative-priority class {ego-first, other-first, tie} x
    pedestrian-in-ego-path x active-conflict flag."""
    ph = int(s[L.S_EGO_PHASE])
    av = int(s[L.S_EGO_APPROACH])
    iv = int(s[L.S_EGO_INTENT])
    dv = s[L.S_EGO_DIST]
    nv = s[L.S_EGO_NOMINAL]
    rank_v = s[L.S_EGO_RANK]
    eta_v = s[L.S_EGO_ETA]
    tta_v = 0.0 if ph >= ATLINE else dv / max(nv, 1e-9)
    occ_v = _occ_dur(iv)

    en = av
    ex = _exit_side(av, iv)
    ped = 1 if (s[L.S_PED_PRESENT + en] > 0.5 or s[L.S_PED_PRESENT + ex] > 0.5) else 0

    conf = 0
    pri = 0
    runner = False
    earlier = False
    tie_right = False
    left_cross = False
    for j in range(L.MAX_OTHERS):
        b = _SO + j * _ST
        if s[b + 0] < 0.5:
            continue
        phj = int(s[b + 6])
        if phj >= CLEARED:
            continue
        aj = int(s[b + 1])
        ij = int(s[b + 2])
        if CONFLICT[av * 3 + iv, aj * 3 + ij] == 0:
            continue
        in_box = phj == INBOX
        tta_j = 0.0 if phj >= ATLINE else s[b + 3] / max(s[b + 5], 1e-9)
        overlap = in_box or (
            tta_j <= tta_v + occ_v + 1.0 and tta_v <= tta_j + _occ_dur(ij) + 1.0
        )
        if overlap:
            conf = 1
        if s[b + 10] < 0.5 and overlap:
            runner = True
        if s[b + 8] < rank_v and s[b + 9] < eta_v - 0.5:
            earlier = True
        if abs(s[b + 9] - eta_v) <= 0.5 and aj == (av + 3) % 4:
            tie_right = True
        if iv == 1 and aj == (av + 2) % 4 and ij != 1 and overlap:
            left_cross = True
    if runner or earlier or left_cross:
        pri = 1
    elif tie_right:
        pri = 2
    return ((ph * 3 + pri) * 2 + ped) * 2 + conf


@_jit
def compact_encode_batch(P):
    out = np.empty(P.shape[0], dtype=np.int64)
    for k in range(P.shape[0]):
        out[k] = compact_encode_core(P[k])
    return out


def warmup():
    """Trigger jit compilation of every kernel (no-op on the fallback path)."""
    s = np.zeros(L.STATE_SIZE)
    s[L.S_EGO_NOMINAL] = 5.0
    s[L.S_EGO_DIST] = 20.0
    u = np.zeros(L.STEP_DRAWS)
    ou = np.full(L.OBS_U_DRAWS, 0.5)
    on = np.zeros(L.OBS_N_DRAWS)
    zero = np.zeros(4)
    oracle_action_core(s, -1, zero, 0)
    ns = step_core(s, GO, u, zero, 0.2, 0, 0.02, 3.0)
    observe_core(s, ou, on, 0.02, 0.15, 1.0, 0.35)
    reward_core(s, GO, ns, GO, -100.0, -10.0, 10.0, -1.0)
    is_terminal_core(s, 12.0)
    P = np.stack([s, ns])
    step_batch(P, GO, np.zeros((2, L.STEP_DRAWS)), 0.2, 0.02, 3.0)
    likelihood_batch(P, observe_core(s, ou, on, 0.0, 0.0, 1.0, 0.35), 1.0, 0.35)
    systematic_resample(np.array([0.5, 0.5]), 0.3)
    rollout_core(
        s, 4, 0.95, np.zeros((4, L.STEP_DRAWS)), np.full(4, 0.5), 0,
        0.2, 0.02, 3.0, 12.0, -100.0, -10.0, 10.0, -1.0,
    )
    compact_encode_batch(P)
