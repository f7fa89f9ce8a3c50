"""
服务包：拟合、准则、诊断、情景、重复实验与运动轨迹分析
"""
