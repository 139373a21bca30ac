"""Subcommand implementations; each returns the plain-text report."""

from __future__ import annotations

import numpy as np

from .config import ConfigError, ExperimentConfig
from .errors import ModelError
from .io import build_system, mapping_name, mapping_points, out_path, provenance


def _lines(*rows) -> str:
    return "".join(f"{r}\n" for r in rows)


def cmd_de(cfg: ExperimentConfig) -> str:
    from .de import find_fixed_points, de_run, saturation_check, write_trajectory_csv
    funcs = build_system(cfg)
    fp = find_fixed_points(funcs, fp_tol=cfg.fp_tol)
    state, trace = de_run(funcs, cfg.L, cfg.W, cfg.max_iter, cfg.stall_tol, v_opt=fp.v_opt,
                          record_every=cfg.record_every, circular=cfg.circular, seed=cfg.seed)
    if not trace.snapshots or trace.snapshots[-1][0] != state.iteration:
        trace.snapshots.append((state.iteration, state.u.copy(), state.v.copy()))
    path = out_path(cfg, "de_trajectory.csv")
    write_trajectory_csv(path, trace, provenance(cfg))
    umin = float(state.u.min())
    if saturation_check(state, fp, cfg.delta):
        verdict = "saturated"
    elif abs(umin - fp.u_BP) <= cfg.delta:
        verdict = "stalled at u_BP"
    else:
        verdict = f"not saturated (min u = {umin:.6g})"
    return _lines(
        f"system       {funcs.name}",
        f"L, W         {cfg.L}, {cfg.W}",
        f"u_opt        {fp.u_opt:.10g}",
        f"u_BP         {fp.u_BP:.10g}",
        f"iterations   {state.iteration} ({'converged' if trace.converged else 'max_iter reached'})",
        f"min u        {umin:.10g}",
        f"verdict      {verdict}",
        f"trajectory   {path}",
    )


def cmd_potential(cfg: ExperimentConfig) -> str:
    from .potential import coordinate_map, equivalence_fit, potential, write_potential_csv
    from .system import build_profile_table
    funcs = build_system(cfg)
    table = build_profile_table(funcs, cfg.n_grid)
    prof = potential(table, cfg.gap_tol, cfg.fp_tol)
    cmap = coordinate_map(table)
    k, _, dev = equivalence_fit(prof, cmap, table)
    path = out_path(cfg, "potential.csv")
    write_potential_csv(path, prof, cmap, provenance(cfg))
    rows = [f"system       {funcs.name}"]
    if all(p.kind == "marginal" for p in prof.stationary):
        flat = float(np.max(np.abs(prof.V))) < 1e-12
        rows.append("all points marginal; V ≡ 0" if flat else "all points marginal")
    else:
        for p in prof.stationary:
            tag = " (boundary)" if p.boundary else ""
            rows.append(f"{p.kind:<8} u = {p.u:.10g}  V = {p.V:.6e}{tag}")
        n = len(prof.minima)
        rows.append(f"{n} minim{'um' if n == 1 else 'a'} reported")
        if prof.opt_is_unique_global_min:
            rows.append(f"unique global minimizer at u_opt = {prof.u_opt:.10g} (gap {prof.gap:.3e})")
        elif prof.unique_global_min:
            rows.append(f"unique global minimizer at u = {prof.global_min_u:.10g}, not u_opt")
        else:
            rows.append("global minimum not unique")
    rows += [f"equivalence  V~(f(u)) = {k:.6g} V(u) + c, max deviation {dev:.3e}",
             f"potential    {path}"]
    return _lines(*rows)


def _ensemble(cfg):
    from .bicm.decoder import RegularEnsemble
    return RegularEnsemble(cfg.l, cfg.r)


def cmd_exit_chart(cfg: ExperimentConfig) -> str:
    from .bicm.chart import build_exit_chart, rate_loss, snr_thresholds, write_chart_csv
    from .bicm.model import BicmModel
    if cfg.system != "bicm":
        raise ConfigError("exit-chart needs system = bicm")
    ens = _ensemble(cfg)
    name = mapping_name(cfg)
    model = BicmModel.from_points(mapping_points(cfg), cfg.snr_db, name=name)
    chart = build_exit_chart(model, ens)
    path = out_path(cfg, "exit_chart.csv")
    write_chart_csv(path, chart, provenance(cfg))
    rl = rate_loss(chart, ens.rate)
    rows = [f"mapping      {name}", f"SNR          {cfg.snr_db:g} dB",
            f"ensemble     ({ens.l}, {ens.r}), I_jump = {ens.I_jump:.6f}, z_jump = {ens.z_jump:.6f}"]
    for z, u, kind in chart.crossings:
        rows.append(f"crossing     z = {z:.8f}  u = {u:.8f}  {kind}")
    rows += [
        f"stable       {len(chart.stable_points)}",
        f"S_t          {chart.S_t:.10f}",
        f"S_m          {chart.S_m:.10f}",
        f"S_b          {chart.S_b:.10f}",
        f"C_CM         {rl.capacity:.10f} bits",
        f"Q r          {rl.Qr:.10f}",
        f"Q S_b        {rl.QS_b:.10f}",
        f"Q (S_t-S_m)  {rl.Q_top_minus_mid:.10f}",
        f"residual     {rl.residual:.3e}",
    ]
    if cfg.with_thresholds:
        th = snr_thresholds(mapping_points(cfg), ens, n_smooth=cfg.n_smooth, lo=cfg.snr_lo,
                            hi=cfg.snr_hi, name=name)
        rows += th.report().splitlines()
        rows += [f"loss S_b     {th.snr_area - th.snr_capacity:.4f} dB",
                 f"loss S_t-S_m {cfg.snr_db - th.snr_area:.4f} dB (relative to {cfg.snr_db:g} dB)"]
    rows.append(f"chart        {path}")
    return _lines(*rows)


def cmd_thresholds(cfg: ExperimentConfig) -> str:
    path = out_path(cfg, "thresholds.txt")
    if cfg.system == "bicm":
        from .bicm.chart import snr_thresholds
        th = snr_thresholds(mapping_points(cfg), _ensemble(cfg), n_smooth=cfg.n_smooth,
                            lo=cfg.snr_lo, hi=cfg.snr_hi, name=mapping_name(cfg))
        text = th.report() + "\n" + _lines(
            f"loss S_b     {th.snr_area - th.snr_capacity:.4f} dB",
            f"loss S_t-S_m {cfg.snr_db - th.snr_area:.4f} dB (relative to {cfg.snr_db:g} dB)")
    elif cfg.system in ("bec36", "bec-regular"):
        from .bicm.decoder import RegularEnsemble, eps_bp_bisection, eps_map_maxwell
        from .potential import potential_threshold
        from .systems import bec_regular_system
        l, r = (3, 6) if cfg.system == "bec36" else (cfg.l, cfg.r)
        ens = RegularEnsemble(l, r)
        star = potential_threshold(lambda e: bec_regular_system(l, r, e), cfg.theta_lo, cfg.theta_hi,
                                   cfg.theta_tol, cfg.n_grid)
        text = _lines(
            f"ensemble          ({l}, {r})",
            f"eps_BP            {ens.eps_bp:.10f}",
            f"eps_BP bisection  {eps_bp_bisection(ens):.10f}",
            f"eps_MAP area      {ens.eps_map:.10f}",
            f"eps_MAP Maxwell   {eps_map_maxwell(ens):.10f}",
            f"eps* potential    {star:.10f}",
        )
    else:
        raise ConfigError("thresholds needs system = bicm, bec36 or bec-regular")
    with open(path, "w") as fh:
        fh.write(provenance(cfg) + "\n" + text)
    return text + f"report            {path}\n"


TEST_PROFILE = "0.5 + 0.3 cos(pi x)"


def _test_profile(x):
    return 0.5 + 0.3 * np.cos(np.pi * x)


def cmd_continuum(cfg: ExperimentConfig) -> str:
    from . import continuum as C
    from .de import find_fixed_points
    from .system import build_profile_table
    funcs = build_system(cfg)
    table = build_profile_table(funcs, cfg.n_grid)
    fp = find_fixed_points(funcs, fp_tol=cfg.fp_tol)
    head = provenance(cfg)
    rows = [f"system       {funcs.name}", f"u_opt        {fp.u_opt:.10g}"]
    unknown = set(cfg.tasks) - {"gap", "pde", "bvp", "compare"}
    if unknown:
        raise ConfigError(f"unknown continuum tasks {sorted(unknown)}")
    n_x = cfg.n_x or None

    if "gap" in cfg.tasks:
        rep = C.operator_gap(_test_profile, funcs, table, cfg.alpha_list, v_opt=fp.v_opt)
        path = out_path(cfg, "gap.csv")
        C.write_gap_csv(path, rep, head)
        rows.append(f"gap          profile {TEST_PROFILE}")
        for a, b, t in rep.rows():
            rows.append(f"  alpha {a:<8g} bulk {b:.6e}  total {t:.6e}")
        rows += [f"gap slope    {rep.slope:.4f}", f"gap csv      {path}"]

    def seed_profile():
        x = C.make_grid(cfg.alpha, n_x)
        init = C.de_profile(funcs, cfg.alpha, cfg.L, x, cfg.max_iter)
        init.values = C._smooth3(init.values)
        return init

    if "pde" in cfg.tasks:
        res = C.pde_relax(funcs, table, cfg.alpha, seed_profile(), t_max=cfg.t_max,
                          tol=cfg.pde_tol, u_opt=fp.u_opt)
        path = out_path(cfg, "profile_pde.csv")
        C.write_profile_csv(path, res.profile, C.stationary_residual(res.profile, table), head)
        rows += [f"pde          t = {res.t:.4g}, steps = {res.steps}, residual {res.residual:.3e}, "
                 f"{'stationary' if res.converged else 't_max reached'}",
                 f"pde min u    {res.profile.values.min():.10g}",
                 f"pde csv      {path}"]

    if "bvp" in cfg.tasks:
        sol = C.bvp_solve(funcs, table, cfg.alpha, seed_profile(), u_opt=fp.u_opt)
        path = out_path(cfg, "profile_bvp.csv")
        C.write_profile_csv(path, sol.profile, C.stationary_residual(sol.profile, table), head)
        uniform = float(np.max(np.abs(sol.profile.values - fp.u_opt))) <= cfg.delta
        rows += [f"bvp          form {sol.form}, {sol.iterations} Newton steps",
                 f"bvp resid    stationary {sol.residual_u:.3e}, mechanical {sol.residual_y:.3e}",
                 f"bvp profile  {'uniform u_opt' if uniform else 'non-uniform'}, "
                 f"min u = {sol.profile.values.min():.10g}",
                 f"bvp csv      {path}"]

    if "compare" in cfg.tasks:
        path = out_path(cfg, "de_vs_bvp.csv")
        diffs = []
        with open(path, "w") as fh:
            fh.write(head + "\nalpha,L,mean_abs_diff\n")
            for a in cfg.alpha_list:
                d, _ = C.de_bvp_difference(funcs, table, a, cfg.L, cfg.max_iter)
                diffs.append(d)
                fh.write(f"{a:.17g},{cfg.L},{d:.17g}\n")
                rows.append(f"  alpha {a:<8g} mean |DE - BVP| {d:.6e}")
        dec = all(b < a for a, b in zip(diffs, diffs[1:]))
        rows += [f"compare      {'decreasing' if dec else 'not monotone'} over alpha",
                 f"compare csv  {path}"]
    return _lines(*rows)


def cmd_interleaver(cfg: ExperimentConfig) -> str:
    from .interleaver import build, verify_uniformity, write_text
    il = build(cfg.L, cfg.W, cfg.M, cfg.seed)
    rep = verify_uniformity(il)
    path = out_path(cfg, "interleaver.txt")
    write_text(path, il, provenance(cfg))
    if cfg.M % cfg.W == 0:
        uni = "exact M/W in both directions" if rep.exact else "NOT uniform"
    else:
        uni = f"W does not divide M; max count deviation {rep.max_deviation}"
    if not rep.bijective or rep.outside:
        raise ModelError("interleaver construction is not a windowed bijection")
    return _lines(
        f"L, W, M      {cfg.L}, {cfg.W}, {cfg.M}",
        f"seed         {cfg.seed}",
        f"bijective    {rep.bijective}",
        f"uniformity   {uni}",
        f"map          {path}",
    )
