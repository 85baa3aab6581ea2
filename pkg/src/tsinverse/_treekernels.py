"""Flat-array MCMC kernels for the sum-of-trees sampler.

Each tree lives in preallocated per-tree slot arrays (split variable, cut
index, children, parent, depth, cell bounds as cut-index ranges, leaf value,
occupancy).  Structure proposals are scored against scratch buffers and only
committed on acceptance.  Everything here is numba-compiled and consumes
randomness exclusively from the Generator passed in, which keeps chains
bit-reproducible for a given seed.

Conventions: a node splits as ``x[var] <= cutvals[cut] -> left``; the
available cut indices of a node on dimension k form the half-open range
``[cutlo[k], cuthi[k])``; ``var == -1`` marks a leaf.  Every leaf must hold at
least one training point, enforced by rejecting proposals that would empty
one.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def _log_psplit(dep, alpha_d, beta_d):
    return np.log(alpha_d) - beta_d * np.log(1.0 + dep)


@njit(cache=True)
def _log_1m_psplit(dep, alpha_d, beta_d):
    return np.log(1.0 - alpha_d * (1.0 + dep) ** (-beta_d))


@njit(cache=True)
def _leaf_core(nl, s, sigma2, sigma_mu2):
    # part of the integrated leaf likelihood that varies with the partition;
    # the (2 pi sigma2)^(-n/2) and sum-of-squares factors cancel in ratios
    v = sigma2 + nl * sigma_mu2
    return 0.5 * np.log(sigma2 / v) + sigma_mu2 * s * s / (2.0 * sigma2 * v)


@njit(cache=True)
def _route(xrow, j, var, cutidx, left, right, cutvals, start,
           ov1, ov1_var, ov1_cut, ov2, ov2_var, ov2_cut):
    node = start
    while True:
        if node == ov1:
            v = ov1_var
            ci = ov1_cut
        elif node == ov2:
            v = ov2_var
            ci = ov2_cut
        else:
            v = var[j, node]
            ci = cutidx[j, node]
        if v == LEAF:
            return node
        if xrow[v] <= cutvals[ci]:
            node = left[j, node]
        else:
            node = right[j, node]


@njit(cache=True)
def _alloc_slot(j, freelist, nfree, nalloc, inuse):
    if nfree[j] > 0:
        nfree[j] -= 1
        s = freelist[j, nfree[j]]
    else:
        s = nalloc[j]
        nalloc[j] += 1
    inuse[j, s] = 1
    return s


@njit(cache=True)
def _try_subtree(j, root, ov1, ov1_var, ov1_cut, ov2, ov2_var, ov2_cut,
                 include_root_prior,
                 var, cutidx, left, right, cutlo, cuthi,
                 X, resid, assign_train, cutvals, sigma2, sigma_mu2,
                 slot_cnt, slot_sum,
                 sub_nodes, in_sub, new_lo, new_hi, tmp_cnt, tmp_sum,
                 tmp_assign, stack):
    """Score new rules at ov1/ov2 inside root's subtree without mutating it.

    Returns (ok, ns, delta_loglik, log_prior_ratio).  ``ns`` subtree nodes are
    listed preorder in ``sub_nodes`` with ``in_sub`` flags set; the caller
    must clear the flags whether or not it commits.
    """
    d = cutlo.shape[2]
    n = X.shape[0]

    ns = 0
    top = 0
    stack[top] = root
    top += 1
    while top > 0:
        top -= 1
        s = stack[top]
        sub_nodes[ns] = s
        ns += 1
        in_sub[s] = 1
        if var[j, s] != LEAF:
            stack[top] = right[j, s]
            top += 1
            stack[top] = left[j, s]
            top += 1

    for k in range(d):
        new_lo[root, k] = cutlo[j, root, k]
        new_hi[root, k] = cuthi[j, root, k]

    ok = True
    log_prior = 0.0
    for idx in range(ns):
        s = sub_nodes[idx]
        v = var[j, s]
        if v == LEAF:
            continue
        if s == ov1:
            ev = ov1_var
            ec = ov1_cut
        elif s == ov2:
            ev = ov2_var
            ec = ov2_cut
        else:
            ev = v
            ec = cutidx[j, s]
        if ec < new_lo[s, ev] or ec >= new_hi[s, ev]:
            ok = False
            break
        l = left[j, s]
        r = right[j, s]
        for k in range(d):
            new_lo[l, k] = new_lo[s, k]
            new_hi[l, k] = new_hi[s, k]
            new_lo[r, k] = new_lo[s, k]
            new_hi[r, k] = new_hi[s, k]
        new_hi[l, ev] = ec
        new_lo[r, ev] = ec + 1
        if include_root_prior == 1 or s != root:
            a_new = 0
            a_old = 0
            for k in range(d):
                if new_hi[s, k] > new_lo[s, k]:
                    a_new += 1
                if cuthi[j, s, k] > cutlo[j, s, k]:
                    a_old += 1
            c_new = new_hi[s, ev] - new_lo[s, ev]
            c_old = cuthi[j, s, v] - cutlo[j, s, v]
            log_prior += (np.log(a_old * 1.0) + np.log(c_old * 1.0)
                          - np.log(a_new * 1.0) - np.log(c_new * 1.0))

    delta_ll = 0.0
    if ok:
        for idx in range(ns):
            s = sub_nodes[idx]
            tmp_cnt[s] = 0
            tmp_sum[s] = 0.0
        for i in range(n):
            if in_sub[assign_train[j, i]] == 1:
                leaf = _route(X[i], j, var, cutidx, left, right, cutvals, root,
                              ov1, ov1_var, ov1_cut, ov2, ov2_var, ov2_cut)
                tmp_assign[i] = leaf
                tmp_cnt[leaf] += 1
                tmp_sum[leaf] += resid[i]
        for idx in range(ns):
            s = sub_nodes[idx]
            if var[j, s] == LEAF:
                if tmp_cnt[s] == 0:
                    ok = False
                    break
                delta_ll += (_leaf_core(tmp_cnt[s], tmp_sum[s], sigma2, sigma_mu2)
                             - _leaf_core(slot_cnt[s], slot_sum[s], sigma2, sigma_mu2))

    return ok, ns, delta_ll, log_prior


@njit(cache=True)
def _commit_subtree(j, ns,
                    var, cutidx, left, right, cutlo, cuthi, nobs,
                    X, Xeval, assign_train, assign_eval, cutvals,
                    slot_cnt, slot_sum,
                    sub_nodes, in_sub, new_lo, new_hi, tmp_cnt, tmp_sum,
                    tmp_assign):
    """Apply a validated subtree proposal; new rules are already written."""
    d = cutlo.shape[2]
    n = assign_train.shape[1]
    q_count = assign_eval.shape[1]

    for idx in range(1, ns):
        s = sub_nodes[idx]
        for k in range(d):
            cutlo[j, s, k] = new_lo[s, k]
            cuthi[j, s, k] = new_hi[s, k]
    for i in range(n):
        if in_sub[assign_train[j, i]] == 1:
            assign_train[j, i] = tmp_assign[i]
    for idx in range(ns - 1, -1, -1):
        s = sub_nodes[idx]
        if var[j, s] == LEAF:
            nobs[j, s] = tmp_cnt[s]
            slot_cnt[s] = tmp_cnt[s]
            slot_sum[s] = tmp_sum[s]
        else:
            nobs[j, s] = nobs[j, left[j, s]] + nobs[j, right[j, s]]
    root = sub_nodes[0]
    for q in range(q_count):
        if in_sub[assign_eval[j, q]] == 1:
            assign_eval[j, q] = _route(Xeval[q], j, var, cutidx, left, right,
                                       cutvals, root, -1, 0, 0, -1, 0, 0)


@njit(cache=True)
def _update_tree(rng, j, X, ytil, Xeval, cutvals, sigma2, sigma_mu2,
                 p_grow_cum, p_prune_cum, p_change_cum, alpha_d, beta_d,
                 var, cutidx, left, right, parent, depth, inuse, leafval,
                 cutlo, cuthi, nobs, freelist, nfree, nalloc,
                 assign_train, assign_eval, total_fit,
                 partial, resid, slot_cnt, slot_sum, tmp_cnt, tmp_sum,
                 tmp_assign, sub_nodes, in_sub, stack, dims_buf, cand_buf,
                 new_lo_buf, new_hi_buf):
    n = X.shape[0]
    d = X.shape[1]
    q_count = Xeval.shape[0]

    # residuals against the other trees, aggregated per current leaf
    for s in range(nalloc[j]):
        slot_cnt[s] = 0
        slot_sum[s] = 0.0
    for i in range(n):
        sl = assign_train[j, i]
        partial[i] = total_fit[i] - leafval[j, sl]
        resid[i] = ytil[i] - partial[i]
        slot_cnt[sl] += 1
        slot_sum[sl] += resid[i]

    u = rng.random()
    if u < p_grow_cum:
        # GROW: split a leaf that has >= 2 points and an available cutpoint
        ng = 0
        for s in range(nalloc[j]):
            if inuse[j, s] == 1 and var[j, s] == LEAF and nobs[j, s] >= 2:
                avail = 0
                for k in range(d):
                    avail += cuthi[j, s, k] - cutlo[j, s, k]
                if avail > 0:
                    cand_buf[ng] = s
                    ng += 1
        if ng > 0:
            eta = cand_buf[rng.integers(0, ng)]
            na = 0
            for k in range(d):
                if cuthi[j, eta, k] > cutlo[j, eta, k]:
                    dims_buf[na] = k
                    na += 1
            v = dims_buf[rng.integers(0, na)]
            ci = cutlo[j, eta, v] + rng.integers(0, cuthi[j, eta, v] - cutlo[j, eta, v])
            c = cutvals[ci]
            n_l = 0
            n_r = 0
            s_l = 0.0
            s_r = 0.0
            for i in range(n):
                if assign_train[j, i] == eta:
                    if X[i, v] <= c:
                        n_l += 1
                        s_l += resid[i]
                    else:
                        n_r += 1
                        s_r += resid[i]
            if n_l > 0 and n_r > 0:
                delta_ll = (_leaf_core(n_l, s_l, sigma2, sigma_mu2)
                            + _leaf_core(n_r, s_r, sigma2, sigma_mu2)
                            - _leaf_core(slot_cnt[eta], slot_sum[eta], sigma2, sigma_mu2))
                # nog count after the grow, for the reverse prune proposal
                nog_new = 1
                for s in range(nalloc[j]):
                    if inuse[j, s] == 1 and var[j, s] >= 0:
                        if var[j, left[j, s]] == LEAF and var[j, right[j, s]] == LEAF:
                            nog_new += 1
                p = parent[j, eta]
                if p >= 0:
                    sib = right[j, p] if left[j, p] == eta else left[j, p]
                    if var[j, sib] == LEAF:
                        nog_new -= 1
                dep = depth[j, eta]
                log_alpha = (delta_ll + np.log(ng * 1.0) - np.log(nog_new * 1.0)
                             + _log_psplit(dep, alpha_d, beta_d)
                             + 2.0 * _log_1m_psplit(dep + 1, alpha_d, beta_d)
                             - _log_1m_psplit(dep, alpha_d, beta_d))
                if np.log(rng.random()) < log_alpha:
                    a = _alloc_slot(j, freelist, nfree, nalloc, inuse)
                    b = _alloc_slot(j, freelist, nfree, nalloc, inuse)
                    for child in (a, b):
                        var[j, child] = LEAF
                        left[j, child] = -1
                        right[j, child] = -1
                        parent[j, child] = eta
                        depth[j, child] = dep + 1
                        leafval[j, child] = 0.0
                        for k in range(d):
                            cutlo[j, child, k] = cutlo[j, eta, k]
                            cuthi[j, child, k] = cuthi[j, eta, k]
                    nobs[j, a] = n_l
                    slot_cnt[a] = n_l
                    slot_sum[a] = s_l
                    nobs[j, b] = n_r
                    slot_cnt[b] = n_r
                    slot_sum[b] = s_r
                    cuthi[j, a, v] = ci
                    cutlo[j, b, v] = ci + 1
                    var[j, eta] = v
                    cutidx[j, eta] = ci
                    left[j, eta] = a
                    right[j, eta] = b
                    for i in range(n):
                        if assign_train[j, i] == eta:
                            assign_train[j, i] = a if X[i, v] <= c else b
                    for q in range(q_count):
                        if assign_eval[j, q] == eta:
                            assign_eval[j, q] = a if Xeval[q, v] <= c else b
    elif u < p_prune_cum:
        # PRUNE: collapse an internal node whose children are both leaves
        nn = 0
        for s in range(nalloc[j]):
            if inuse[j, s] == 1 and var[j, s] >= 0:
                if var[j, left[j, s]] == LEAF and var[j, right[j, s]] == LEAF:
                    cand_buf[nn] = s
                    nn += 1
        if nn > 0:
            eta = cand_buf[rng.integers(0, nn)]
            a = left[j, eta]
            b = right[j, eta]
            n_l = slot_cnt[a]
            s_l = slot_sum[a]
            n_r = slot_cnt[b]
            s_r = slot_sum[b]
            delta_ll = (_leaf_core(n_l + n_r, s_l + s_r, sigma2, sigma_mu2)
                        - _leaf_core(n_l, s_l, sigma2, sigma_mu2)
                        - _leaf_core(n_r, s_r, sigma2, sigma_mu2))
            # growable leaves in the pruned tree: eta qualifies by construction
            ng_new = 1
            for s in range(nalloc[j]):
                if (inuse[j, s] == 1 and var[j, s] == LEAF and s != a and s != b
                        and nobs[j, s] >= 2):
                    avail = 0
                    for k in range(d):
                        avail += cuthi[j, s, k] - cutlo[j, s, k]
                    if avail > 0:
                        ng_new += 1
            dep = depth[j, eta]
            log_alpha = (delta_ll + np.log(nn * 1.0) - np.log(ng_new * 1.0)
                         + _log_1m_psplit(dep, alpha_d, beta_d)
                         - _log_psplit(dep, alpha_d, beta_d)
                         - 2.0 * _log_1m_psplit(dep + 1, alpha_d, beta_d))
            if np.log(rng.random()) < log_alpha:
                inuse[j, a] = 0
                freelist[j, nfree[j]] = a
                nfree[j] += 1
                inuse[j, b] = 0
                freelist[j, nfree[j]] = b
                nfree[j] += 1
                var[j, eta] = LEAF
                left[j, eta] = -1
                right[j, eta] = -1
                slot_cnt[eta] = n_l + n_r
                slot_sum[eta] = s_l + s_r
                for i in range(n):
                    sl = assign_train[j, i]
                    if sl == a or sl == b:
                        assign_train[j, i] = eta
                for q in range(q_count):
                    sl = assign_eval[j, q]
                    if sl == a or sl == b:
                        assign_eval[j, q] = eta
    elif u < p_change_cum:
        # CHANGE: redraw the rule of an internal node from its available set
        ni = 0
        for s in range(nalloc[j]):
            if inuse[j, s] == 1 and var[j, s] >= 0:
                cand_buf[ni] = s
                ni += 1
        if ni > 0:
            eta = cand_buf[rng.integers(0, ni)]
            na = 0
            for k in range(d):
                if cuthi[j, eta, k] > cutlo[j, eta, k]:
                    dims_buf[na] = k
                    na += 1
            v_new = dims_buf[rng.integers(0, na)]
            ci_new = cutlo[j, eta, v_new] + rng.integers(
                0, cuthi[j, eta, v_new] - cutlo[j, eta, v_new])
            # proposal is symmetric and eta's own rule prior cancels with it,
            # so only descendants contribute to the prior ratio
            ok, ns, delta_ll, log_prior = _try_subtree(
                j, eta, eta, v_new, ci_new, -1, 0, 0, 0,
                var, cutidx, left, right, cutlo, cuthi,
                X, resid, assign_train, cutvals, sigma2, sigma_mu2,
                slot_cnt, slot_sum,
                sub_nodes, in_sub, new_lo_buf, new_hi_buf, tmp_cnt, tmp_sum,
                tmp_assign, stack)
            if ok and np.log(rng.random()) < delta_ll + log_prior:
                var[j, eta] = v_new
                cutidx[j, eta] = ci_new
                _commit_subtree(j, ns,
                                var, cutidx, left, right, cutlo, cuthi, nobs,
                                X, Xeval, assign_train, assign_eval, cutvals,
                                slot_cnt, slot_sum,
                                sub_nodes, in_sub, new_lo_buf, new_hi_buf,
                                tmp_cnt, tmp_sum, tmp_assign)
            for idx in range(ns):
                in_sub[sub_nodes[idx]] = 0
    else:
        # SWAP: exchange rules between an internal node and its internal parent
        np_ = 0
        for s in range(nalloc[j]):
            if inuse[j, s] == 1 and var[j, s] >= 0 and parent[j, s] >= 0:
                cand_buf[np_] = s
                np_ += 1
        if np_ > 0:
            child = cand_buf[rng.integers(0, np_)]
            pi = parent[j, child]
            ok, ns, delta_ll, log_prior = _try_subtree(
                j, pi, pi, var[j, child], cutidx[j, child],
                child, var[j, pi], cutidx[j, pi], 1,
                var, cutidx, left, right, cutlo, cuthi,
                X, resid, assign_train, cutvals, sigma2, sigma_mu2,
                slot_cnt, slot_sum,
                sub_nodes, in_sub, new_lo_buf, new_hi_buf, tmp_cnt, tmp_sum,
                tmp_assign, stack)
            if ok and np.log(rng.random()) < delta_ll + log_prior:
                v_p = var[j, pi]
                c_p = cutidx[j, pi]
                var[j, pi] = var[j, child]
                cutidx[j, pi] = cutidx[j, child]
                var[j, child] = v_p
                cutidx[j, child] = c_p
                _commit_subtree(j, ns,
                                var, cutidx, left, right, cutlo, cuthi, nobs,
                                X, Xeval, assign_train, assign_eval, cutvals,
                                slot_cnt, slot_sum,
                                sub_nodes, in_sub, new_lo_buf, new_hi_buf,
                                tmp_cnt, tmp_sum, tmp_assign)
            for idx in range(ns):
                in_sub[sub_nodes[idx]] = 0

    # conjugate redraw of every leaf value, then refresh the running fit
    for s in range(nalloc[j]):
        if inuse[j, s] == 1 and var[j, s] == LEAF:
            prec = slot_cnt[s] / sigma2 + 1.0 / sigma_mu2
            pmean = (slot_sum[s] / sigma2) / prec
            leafval[j, s] = pmean + rng.standard_normal() / np.sqrt(prec)
    for i in range(n):
        total_fit[i] = partial[i] + leafval[j, assign_train[j, i]]


@njit(cache=True)
def run_iteration(rng, X, ytil, Xeval, cutvals, sigma2, sigma_mu2, nu, lam,
                  p_grow_cum, p_prune_cum, p_change_cum, alpha_d, beta_d,
                  var, cutidx, left, right, parent, depth, inuse, leafval,
                  cutlo, cuthi, nobs, freelist, nfree, nalloc,
                  assign_train, assign_eval, total_fit,
                  partial, resid, slot_cnt, slot_sum, tmp_cnt, tmp_sum,
                  tmp_assign, sub_nodes, in_sub, stack, dims_buf, cand_buf,
                  new_lo_buf, new_hi_buf):
    """One backfitting sweep over all trees plus the sigma^2 draw.

    Returns the new sigma^2.
    """
    m = var.shape[0]
    n = X.shape[0]
    for j in range(m):
        _update_tree(rng, j, X, ytil, Xeval, cutvals, sigma2, sigma_mu2,
                     p_grow_cum, p_prune_cum, p_change_cum, alpha_d, beta_d,
                     var, cutidx, left, right, parent, depth, inuse, leafval,
                     cutlo, cuthi, nobs, freelist, nfree, nalloc,
                     assign_train, assign_eval, total_fit,
                     partial, resid, slot_cnt, slot_sum, tmp_cnt, tmp_sum,
                     tmp_assign, sub_nodes, in_sub, stack, dims_buf, cand_buf,
                     new_lo_buf, new_hi_buf)
    ss = 0.0
    for i in range(n):
        e = ytil[i] - total_fit[i]
        ss += e * e
    return (nu * lam + ss) / rng.chisquare(nu + n)


@njit(cache=True)
def gather_eval(leafval, assign_eval, out):
    """Ensemble prediction at the tracked eval points: out[q] = sum_j value."""
    m = leafval.shape[0]
    q_count = assign_eval.shape[1]
    for q in range(q_count):
        out[q] = 0.0
    for j in range(m):
        for q in range(q_count):
            out[q] += leafval[j, assign_eval[j, q]]


@njit(cache=True)
def predict_points(var, cutidx, left, right, leafval, X, cutvals, out):
    """Ensemble prediction at arbitrary points for one stored draw."""
    m = var.shape[0]
    n = X.shape[0]
    for i in range(n):
        out[i] = 0.0
    for j in range(m):
        for i in range(n):
            node = 0
            while var[j, node] != LEAF:
                if X[i, var[j, node]] <= cutvals[cutidx[j, node]]:
                    node = left[j, node]
                else:
                    node = right[j, node]
            out[i] += leafval[j, node]
