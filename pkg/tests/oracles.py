"""Independent brute-force reimplementations used as test oracles.

Everything here is written with naive loops straight from the definitions and
shares no code with the package under test.
"""

import math


def window_bounds(i, n, w):
    lo = max(0, i - (w - 1) // 2)
    hi = min(n, i + w // 2 + 1)
    return lo, hi


def brute_windowed_variance(x, w):
    """Population variance over the centered window at each index."""
    n = len(x)
    out = []
    for i in range(n):
        lo, hi = window_bounds(i, n, w)
        vals = x[lo:hi]
        m = sum(vals) / len(vals)
        out.append(sum((v - m) ** 2 for v in vals) / len(vals))
    return out


def brute_stability(steer, w):
    sigma = brute_windowed_variance(list(steer), w)
    smax = max(sigma)
    if smax == 0.0:
        return sigma, [1.0] * len(sigma)
    return sigma, [1.0 - s / smax for s in sigma]


def brute_f_raw(throttle, brake, steer, w):
    """Windowed mean absolute first differences, each channel normalized by
    its trip max step; window denominator is the sample count."""
    n = len(steer)
    chans = []
    for raw in (throttle, brake, steer):
        d = [abs(raw[j + 1] - raw[j]) for j in range(n - 1)]
        dmax = max(d) if d else 0.0
        chans.append([v / dmax for v in d] if dmax > 0 else [0.0] * (n - 1))
    combined = [(a + b + c) / 3.0 for a, b, c in zip(*chans)]
    out = []
    for i in range(n):
        lo, hi = window_bounds(i, n, w)
        steps = combined[lo:hi - 1]
        out.append(sum(steps) / (hi - lo))
    return out


def brute_point_segment_distance(px, py, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    wx, wy = px - ax, py - ay
    seg2 = vx * vx + vy * vy
    u = (wx * vx + wy * vy) / seg2
    u = min(max(u, 0.0), 1.0)
    cx, cy = ax + u * vx, ay + u * vy
    return math.hypot(px - cx, py - cy)


def brute_cross_track(px, py, waypoints):
    best = math.inf
    for (ax, ay), (bx, by) in zip(waypoints[:-1], waypoints[1:]):
        best = min(best, brute_point_segment_distance(px, py, ax, ay, bx, by))
    return best


def brute_event_scores(t, steer, throttle, brake, xs, ys, waypoints,
                       event_windows, f_raw, alpha,
                       theta_s, theta_b, theta_t, agg="mean"):
    """Per-event reaction/smoothness/route scores from their definitions.

    event_windows: list of (t0, t1).  Returns dict of lists.
    """
    n = len(t)
    rts, fbars, devs, no_resp = [], [], [], []
    for (t0, t1) in event_windows:
        idx = [i for i in range(n) if t0 - 1e-9 <= t[i] <= t1 + 1e-9]
        i0 = idx[0]
        rt = None
        for j in idx:
            if brake[j] >= theta_b:
                rt = t[j] - t[i0]
                break
            if j > i0 and (abs(steer[j] - steer[j - 1]) >= theta_s
                           or abs(throttle[j] - throttle[j - 1]) >= theta_t):
                rt = t[j] - t[i0]
                break
        if rt is None:
            rts.append(t[idx[-1]] - t[i0])
            no_resp.append(True)
        else:
            rts.append(rt)
            no_resp.append(False)
        fbars.append(sum(f_raw[j] for j in idx) / len(idx))
        ds = [brute_cross_track(xs[j], ys[j], waypoints) for j in idx]
        devs.append(max(ds) if agg == "max" else sum(ds) / len(ds))

    rt_max = max(rts)
    f_max = max(fbars)
    d_max = max(devs)
    s_time = [1.0 if rt_max == 0 else 1.0 - r / rt_max for r in rts]
    s_fluent = [1.0 if f_max == 0 else 1.0 - f / f_max for f in fbars]
    s_react = [alpha * a + (1.0 - alpha) * b for a, b in zip(s_time, s_fluent)]
    s_route = [1.0 if d_max == 0 else 1.0 - d / d_max for d in devs]
    return {"rt": rts, "no_response": no_resp, "s_time": s_time,
            "s_fluent": s_fluent, "s_react": s_react, "s_route": s_route,
            "d": devs}


def brute_importance_ratios(x, labels):
    """Per-column between/total sum of squares via explicit loops."""
    n_rows = len(x)
    n_cols = len(x[0])
    ratios = []
    for j in range(n_cols):
        col = [x[i][j] for i in range(n_rows)]
        grand = sum(col) / n_rows
        tss = sum((v - grand) ** 2 for v in col)
        bss = 0.0
        for lab in set(labels):
            sub = [col[i] for i in range(n_rows) if labels[i] == lab]
            mean_c = sum(sub) / len(sub)
            bss += len(sub) * (mean_c - grand) ** 2
        ratios.append(0.0 if tss == 0 else bss / tss)
    return ratios
