"""Reference values pinned from ``oracles/derive_constants.py`` (50-digit mpmath)."""

FROZEN = {
    'cos_theta_2x2': 0.8320502943378437,
    'xi_2x2': 0.1679497056621563,
    'angle_2x2': 0.5880026035475675,
    'R1_2x2': [1.0, 0.6666666666666666],
    'Q2_2x2': [0.5547001962252291, -0.8320502943378437],
    'svd_2x2': [2.2476790206496235, 0.4449033829176287],
    'gelfand_value': 10.024937810560445,
    'gelfand_t': 1,
    'block_bound_2x2': 0.006666666666666667,
    'block_actual_2x2': 0.006637297521077797,
    'unstable_ratio_11': 1.3867504905630728,
    'stage1_err_t0_5': 0.0002441406177240427,
    'stage2_M1_t0_5': 1.9999999105930382,
    'adapt_t0_delta_1e-3': 4,
    'delta_tau_2': 2.5,
}
