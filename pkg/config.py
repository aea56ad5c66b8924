# -*- coding: utf-8 -*-
"""
配置文件 - 定义全局参数和设置
Configuration file - defines global parameters and settings.
"""

import os

# 拟合参数
# Fit parameters (single fits)
FIT_CONFIG = {
    'eta': 1e-10,                 # 相对收敛容差 relative-change tolerance
    'max_outer': 500,             # 外层交替迭代上限
    'max_inner': 2000,            # ICM / Newton 内层迭代上限
    'beta_box': 10.0,             # |beta|_inf <= beta_box
    'delta_floor': 1e-10,         # ICM 中 dN>0 处允许的最小 dLambda
    'icm_ridge': 1e-8,            # 零曲率格点的工作权重
    'line_search_depth': 30,      # 步长从 1 减半到 2^-30
    'hessian_cond_max': 1e14,     # Hessian 条件数上限
    'icm_kkt_tol': 1e-9,          # ICM 投影梯度 (KKT) 停止容差, 相对 1 + max(lambda)
}

# 蒙特卡洛拟合参数 (运行时间考虑, eta 放宽)
# Monte Carlo fit parameters
MONTE_CARLO_FIT_CONFIG = dict(FIT_CONFIG, eta=1e-6, icm_kkt_tol=1e-7)

# Bootstrap 配置
BOOTSTRAP_CONFIG = {
    'replicates': 200,
    'max_failed_fraction': 0.2,
}

# 模拟情景配置
# Simulation scenario configuration
SCENARIO_CONFIG = {
    'beta0': (-1.0, 0.5, 1.5),
    'lambda_slope': 2.0,          # Lambda0(t) = 2t
    'k_support': (1, 2, 3, 4, 5, 6),
    'time_window': (1.0, 10.0),
    'time_decimals': 2,
    'frailty_support': (-0.4, 0.0, 0.4),
    'frailty_probs': (0.25, 0.5, 0.25),
    'max_failed_fraction': 0.1,
}

# 基线均值函数包络
# Baseline-mean envelope table
ENVELOPE_CONFIG = {
    'grid_start': 1.0,
    'grid_stop': 10.0,
    'grid_points': 100,
    'lower_percentile': 2.5,
    'upper_percentile': 97.5,
    'min_replicates': 40,
}

# 数值积分节点数
QUADRATURE_CONFIG = {
    'legendre_nodes': 40,
    'hermite_nodes': 40,
}

# 日志
LOGGING_CONFIG = {
    'level': 'WARNING',
    'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
    'datefmt': '%H:%M:%S',
}


def get_project_root():
    """获取项目根目录路径"""
    return os.path.dirname(os.path.abspath(__file__))


def get_output_dir():
    """获取输出目录路径（output文件夹）"""
    output_dir = os.path.join(get_project_root(), "output")
    os.makedirs(output_dir, exist_ok=True)
    return output_dir


def get_preset_dir():
    """Directory holding the bundled YAML run presets."""
    return os.path.join(get_project_root(), "components", "presets")


def get_output_path(filename):
    """
    获取输出文件的完整路径

    Args:
        filename: 文件名（如 "scenario1_n100.yaml"）

    Returns:
        str: 完整的文件路径
    """
    return os.path.join(get_output_dir(), filename)
