"""
全局配置文件
"""

import math

# 日志配置
LOG_CONFIG = {
    'level': 'INFO',
    'log_file': 'hmmlab.log',     # 写在工作目录，不写入输出目录
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
}

# 时区配置（轨迹文件中不带时区的时间戳按此解释）
TIMEZONE = "UTC"

# 数值拟合配置
FIT_CONFIG = {
    'n_starts': 25,
    'seed': 20190101,
    'max_iterations': 1000,
    'convergence_tolerance': 1e-8,  # 对数似然相对变化
    'gradient': '2-point',          # 有限差分梯度
    'include_template_start': False,
    'workers': 1,
}

# 自然尺度上的箱约束（均值上界为"该通道最大观测的倍数"）
PARAMETER_BOUNDS = {
    'mean': (1e-4, 10.0),
    'shape': (0.05, 50.0),
    'concentration': (1e-3, 500.0),
    'logit': (-25.0, 25.0),
}

# 随机起点抽样
START_SAMPLER = {
    'mean_jitter': 0.3,             # 分位数乘性扰动 ±30%
    'shape_range': (0.3, 5.0),      # 对数均匀
    'tpm_diagonal_range': (0.7, 0.95),
    'zero_mass_floor': 1e-3,
    'concentration_range': (0.1, 10.0),
    'location_jitter': math.pi / 4,
}

# 情景默认参数
SCENARIO_DEFAULTS = {
    'T': 5000,
    'seed': 1,
    'baseline': {
        'means': (0.5, 4.0),
        'shapes': (0.7, 2.5),
        'leave_probability': 0.1,
    },
    'outlier_fraction': 0.005,
    'outlier_interval': (10.0, 20.0),
    'spline_table': 'scenario2_spline_density.txt',
    'diel_period': 96,              # 每15分钟一个时段
    'diel_intercept': -2.2,
    'diel_amplitude': 1.5,
    'diel_phase': 0,                # 午夜（时段0）最活跃
    'n_tracks': 10,
    'track_length': 500,
    'heterogeneity_log_mean': math.log(4.0),
    'heterogeneity_log_sd': 0.15,
    'dwell_mean': 3.0,
    'dwell_mode': 'shift',
    'second_order_switch_after_stay': 0.25,
    'second_order_switch_after_entry': 0.05,
    'ar_coefficient': 0.95,
    'ar_stationary_sd': 0.25,
    'scenario9': {
        'T': 1000,
        'means': (0.5, 1.5, 3.0),
        'shapes': (2.0, 3.0, 4.0),
        'tpm_diagonal': 0.9,
    },
    'scenario10': {
        'T': 2000,
        'means': (5.5, 3.0, 1.0),
        'shapes': (12.0, 4.0, 1.5),
        'tpm_diagonal': 0.8,
    },
}

# 重复实验配置
BENCH_CONFIG = {
    'replicates': 100,
    'n_range': (2, 3, 4, 5),
    'n_range_appendix': (2, 3, 4),
    'n_starts': 150,
    'workers': None,                # None时取物理核心数
}

# 运动轨迹分析配置
MOVEMENT_CONFIG = {
    'n_range': (2, 3, 4, 5),
    'n_starts': 50,
    'step_grid_points': 200,
    'angle_grid_points': 181,
    'acf_max_lag': 48,
    'zero_inflation': True,         # 步长固定用零膨胀伽马；false或auto需显式指定
    # 未给出轨迹文件时使用的模拟数据（三个行为状态，步长单位为米）
    'synthetic': {
        'n_tracks': 4,
        'length': 1000,
        'interval': '1h',
        'tpm_diagonal': 0.85,
        'zero_mass': (0.01, 0.01, 0.01),
        'step_means': (20.0, 200.0, 1000.0),
        'step_shapes': (1.5, 2.5, 4.0),
        'angle_locations': (math.pi, 0.0, 0.0),
        'angle_concentrations': (0.5, 2.0, 8.0),
    },
}

# 残差诊断
DIAGNOSTICS_CONFIG = {
    'clamp': 1e-12,
    'simulation_check_runs': 100,
}
