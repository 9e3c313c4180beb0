"""Compiled inner loops for the planar multibody integrator.

Every point of the model is ``base + sum_k L_k * u(a_k . q + c_k)`` with
``u(phi) = (sin phi, -cos phi)``; the arrays below encode the ``L``, ``a``
and ``c`` of each term plus which terms make up each body COM and foot.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def term_angles(q, qd, term_coef, term_off):
    nt, n = term_coef.shape
    phi = np.empty(nt)
    phid = np.empty(nt)
    for k in range(nt):
        s = term_off[k]
        sd = 0.0
        for j in range(n):
            s += term_coef[k, j] * q[j]
            sd += term_coef[k, j] * qd[j]
        phi[k] = s
        phid[k] = sd
    return phi, phid


@njit(cache=True)
def point_jacobian(
    incidence, floating, term_len, term_coef, phi, phid, out_pos, out_jac
):
    """Position, Jacobian (2, n) and velocity-product bias of one point."""
    nt, n = term_coef.shape
    out_jac[:, :] = 0.0
    px = 0.0
    pz = 0.0
    bx = 0.0
    bz = 0.0
    if floating:
        out_jac[0, 0] = 1.0
        out_jac[1, 1] = 1.0
    for k in range(nt):
        if incidence[k] != 0.0:
            ln = term_len[k]
            s = np.sin(phi[k])
            c = np.cos(phi[k])
            px += ln * s
            pz -= ln * c
            for j in range(n):
                a = term_coef[k, j]
                if a != 0.0:
                    out_jac[0, j] += ln * c * a
                    out_jac[1, j] += ln * s * a
            w2 = phid[k] * phid[k]
            bx -= ln * s * w2
            bz += ln * c * w2
    out_pos[0] = px
    out_pos[1] = pz
    return bx, bz


@njit(cache=True)
def mass_matrix_and_bias(
    q, qd, floating, term_len, term_coef, term_off,
    body_mass, body_inertia, body_coef, body_terms, gravity, armature,
):
    """Mass matrix ``M(q)`` and ``gravity - velocity-product`` generalized force.

    ``armature`` is reflected rotor inertia added to the diagonal.
    """
    n = q.shape[0]
    nb = body_mass.shape[0]
    phi, phid = term_angles(q, qd, term_coef, term_off)
    m_mat = np.zeros((n, n))
    rhs = np.zeros(n)
    jac = np.zeros((2, n))
    pos = np.zeros(2)
    for b in range(nb):
        bx, bz = point_jacobian(
            body_terms[b], floating, term_len, term_coef, phi, phid, pos, jac
        )
        m = body_mass[b]
        inertia = body_inertia[b]
        for i in range(n):
            ji0 = jac[0, i]
            ji1 = jac[1, i]
            ai = body_coef[b, i]
            for j in range(n):
                m_mat[i, j] += m * (ji0 * jac[0, j] + ji1 * jac[1, j]) + inertia * ai * body_coef[b, j]
            rhs[i] += m * (ji0 * (-bx) + ji1 * (-gravity - bz))
    for i in range(n):
        m_mat[i, i] += armature[i]
    return m_mat, rhs


@njit(cache=True)
def mechanical_energy(
    q, qd, floating, term_len, term_coef, term_off,
    body_mass, body_inertia, body_coef, body_terms, gravity, armature,
):
    n = q.shape[0]
    nb = body_mass.shape[0]
    phi, phid = term_angles(q, qd, term_coef, term_off)
    jac = np.zeros((2, n))
    pos = np.zeros(2)
    kinetic = 0.0
    potential = 0.0
    for b in range(nb):
        point_jacobian(body_terms[b], floating, term_len, term_coef, phi, phid, pos, jac)
        vx = 0.0
        vz = 0.0
        w = 0.0
        for j in range(n):
            vx += jac[0, j] * qd[j]
            vz += jac[1, j] * qd[j]
            w += body_coef[b, j] * qd[j]
        kinetic += 0.5 * body_mass[b] * (vx * vx + vz * vz) + 0.5 * body_inertia[b] * w * w
        z = pos[1]
        if floating:
            z += q[1]
        potential += body_mass[b] * gravity * z
    for j in range(n):
        kinetic += 0.5 * armature[j] * qd[j] * qd[j]
    return kinetic, potential


@njit(cache=True)
def foot_states(q, qd, floating, term_len, term_coef, term_off, foot_terms):
    """World positions, velocities and Jacobians of every foot."""
    n = q.shape[0]
    nf = foot_terms.shape[0]
    phi, phid = term_angles(q, qd, term_coef, term_off)
    pos = np.zeros((nf, 2))
    vel = np.zeros((nf, 2))
    jacs = np.zeros((nf, 2, n))
    p = np.zeros(2)
    jac = np.zeros((2, n))
    for f in range(nf):
        point_jacobian(foot_terms[f], floating, term_len, term_coef, phi, phid, p, jac)
        pos[f, 0] = p[0]
        pos[f, 1] = p[1]
        if floating:
            pos[f, 0] += q[0]
            pos[f, 1] += q[1]
        for j in range(n):
            vel[f, 0] += jac[0, j] * qd[j]
            vel[f, 1] += jac[1, j] * qd[j]
            jacs[f, 0, j] = jac[0, j]
            jacs[f, 1, j] = jac[1, j]
    return pos, vel, jacs


@njit(cache=True)
def contact_response(pos, vel, anchor, k_n, c_n, mu, k_t, c_t):
    """Penalty normal force and Coulomb-capped anchor spring, per unit foot.

    Returns forces of shape (nf, 2), the updated anchors and contact flags.
    Anchors are NaN for feet out of contact.
    """
    nf = pos.shape[0]
    force = np.zeros((nf, 2))
    new_anchor = anchor.copy()
    contact = np.zeros(nf, dtype=np.bool_)
    for f in range(nf):
        pen = -pos[f, 1]
        if pen <= 0.0:
            new_anchor[f] = np.nan
            continue
        contact[f] = True
        a = new_anchor[f]
        if np.isnan(a):
            a = pos[f, 0]
        fn = k_n * pen - c_n * vel[f, 1]
        if fn < 0.0:
            fn = 0.0
        ft = -k_t * (pos[f, 0] - a) - c_t * vel[f, 0]
        cap = mu * fn
        if abs(ft) > cap:
            ft = cap if ft > 0.0 else -cap
            a = pos[f, 0] + ft / k_t
        new_anchor[f] = a
        force[f, 0] = ft
        force[f, 1] = fn
    return force, new_anchor, contact


@njit(cache=True)
def pd_motor_torques(target, q, qd, motor_index, motor_sign, motor_enabled, kp, kd, limit):
    nm = motor_index.shape[0]
    tau = np.zeros(nm)
    for m in range(nm):
        if not motor_enabled[m]:
            continue
        i = motor_index[m]
        s = motor_sign[m]
        t = kp[m] * (target[m] - s * q[i]) - kd[m] * s * qd[i]
        lim = limit[m]
        if t > lim:
            t = lim
        elif t < -lim:
            t = -lim
        tau[m] = t
    return tau


@njit(cache=True)
def semi_implicit_step(
    q, qd, anchor, tau, dt,
    floating, term_len, term_coef, term_off,
    body_mass, body_inertia, body_coef, body_terms, gravity, armature,
    foot_terms, foot_scale, contacts_on, k_n, c_n, mu, k_t, c_t,
    motor_index, motor_sign, free_index, max_speed,
):
    """One semi-implicit Euler step.

    Returns ``(q, qd, anchor, contact, foot_force, energy, positive_work, ok)``.
    ``foot_force`` is the total force on each (possibly multi-leg) foot.
    """
    n = q.shape[0]
    nm = motor_index.shape[0]
    m_mat, rhs = mass_matrix_and_bias(
        q, qd, floating, term_len, term_coef, term_off,
        body_mass, body_inertia, body_coef, body_terms, gravity, armature,
    )
    energy = 0.0
    positive = 0.0
    for m in range(nm):
        i = motor_index[m]
        rhs[i] += motor_sign[m] * tau[m]
        p = tau[m] * motor_sign[m] * qd[i]
        energy += abs(p) * dt
        if p > 0.0:
            positive += p * dt
    nf = foot_terms.shape[0]
    if contacts_on and nf > 0:
        pos, vel, jacs = foot_states(q, qd, floating, term_len, term_coef, term_off, foot_terms)
        unit, new_anchor, contact = contact_response(pos, vel, anchor, k_n, c_n, mu, k_t, c_t)
        force = np.zeros((nf, 2))
        for f in range(nf):
            force[f, 0] = foot_scale[f] * unit[f, 0]
            force[f, 1] = foot_scale[f] * unit[f, 1]
            for j in range(n):
                rhs[j] += jacs[f, 0, j] * force[f, 0] + jacs[f, 1, j] * force[f, 1]
    else:
        new_anchor = np.full(nf, np.nan)
        contact = np.zeros(nf, dtype=np.bool_)
        force = np.zeros((nf, 2))
    nfree = free_index.shape[0]
    m_red = np.empty((nfree, nfree))
    r_red = np.empty(nfree)
    for a in range(nfree):
        r_red[a] = rhs[free_index[a]]
        for b in range(nfree):
            m_red[a, b] = m_mat[free_index[a], free_index[b]]
    acc = np.linalg.solve(m_red, r_red)
    new_qd = np.zeros(n)
    for a in range(nfree):
        i = free_index[a]
        new_qd[i] = qd[i] + dt * acc[a]
    new_q = q + dt * new_qd
    ok = True
    for j in range(n):
        if not (np.isfinite(new_q[j]) and np.isfinite(new_qd[j])):
            ok = False
        elif abs(new_qd[j]) > max_speed:
            ok = False
    return new_q, new_qd, new_anchor, contact, force, energy, positive, ok


@njit(cache=True)
def pd_rollout(
    q, qd, anchor, target, dt, n_sub,
    floating, term_len, term_coef, term_off,
    body_mass, body_inertia, body_coef, body_terms, gravity, armature,
    foot_terms, foot_scale, contacts_on, k_n, c_n, mu, k_t, c_t,
    motor_index, motor_sign, motor_enabled, kp, kd, limit, free_index, max_speed,
):
    """Hold a PD target for ``n_sub`` substeps.

    Returns the final state, last torques, last contact flags, summed
    ``|tau*omega|*dt`` energy, summed positive work, per-motor summed
    ``|tau*omega|*dt``, substeps completed, and an ok flag.
    """
    nm = motor_index.shape[0]
    nf = foot_terms.shape[0]
    tau = np.zeros(nm)
    contact = np.zeros(nf, dtype=np.bool_)
    energy = 0.0
    positive = 0.0
    done = 0
    ok = True
    for _ in range(n_sub):
        tau = pd_motor_torques(target, q, qd, motor_index, motor_sign, motor_enabled, kp, kd, limit)
        q, qd, anchor, contact, _force, e, p, ok = semi_implicit_step(
            q, qd, anchor, tau, dt,
            floating, term_len, term_coef, term_off,
            body_mass, body_inertia, body_coef, body_terms, gravity, armature,
            foot_terms, foot_scale, contacts_on, k_n, c_n, mu, k_t, c_t,
            motor_index, motor_sign, free_index, max_speed,
        )
        energy += e
        positive += p
        done += 1
        if not ok:
            break
    return q, qd, anchor, contact, tau, energy, positive, done, ok
