#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
HMM递推内核
前向（带缩放）、预测滤波与Viterbi递推，使用numba编译

输入均为单条轨迹的对数发射矩阵log_b（T×N，缺失通道已在外层按因子1处理）
"""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def forward_log_likelihood(delta, tpm, log_b):
    """
    缩放前向算法

    参数:
        delta: 初始分布（N）
        tpm: 转移概率矩阵（N×N）
        log_b: 对数发射矩阵（T×N）
    返回:
        对数似然；无法计算时为−∞
    """
    n_steps, n_states = log_b.shape
    phi = np.empty(n_states)
    new_phi = np.empty(n_states)

    m = -np.inf
    for i in range(n_states):
        if log_b[0, i] > m:
            m = log_b[0, i]
    if not (-np.inf < m < np.inf):
        return -np.inf
    total = 0.0
    for i in range(n_states):
        phi[i] = delta[i] * math.exp(log_b[0, i] - m)
        total += phi[i]
    if not total > 0.0:
        return -np.inf
    log_lik = math.log(total) + m
    for i in range(n_states):
        phi[i] /= total

    for t in range(1, n_steps):
        m = -np.inf
        for j in range(n_states):
            if log_b[t, j] > m:
                m = log_b[t, j]
        if not (-np.inf < m < np.inf):
            return -np.inf
        total = 0.0
        for j in range(n_states):
            acc = 0.0
            for i in range(n_states):
                acc += phi[i] * tpm[i, j]
            new_phi[j] = acc * math.exp(log_b[t, j] - m)
            total += new_phi[j]
        if not total > 0.0:
            return -np.inf
        log_lik += math.log(total) + m
        for j in range(n_states):
            phi[j] = new_phi[j] / total
    return log_lik


@numba.njit(cache=True)
def predictive_weights(delta, tpm, log_b):
    """
    一步预测状态概率 P(S_t = i | x_1..x_{t-1})

    返回:
        T×N矩阵，第0行为初始分布；遇到零概率观测时其后各行为NaN
    """
    n_steps, n_states = log_b.shape
    weights = np.full((n_steps, n_states), np.nan)
    phi = np.empty(n_states)
    for i in range(n_states):
        weights[0, i] = delta[i]

    for t in range(n_steps - 1):
        m = -np.inf
        for i in range(n_states):
            if log_b[t, i] > m:
                m = log_b[t, i]
        if not (-np.inf < m < np.inf):
            return weights
        total = 0.0
        for i in range(n_states):
            phi[i] = weights[t, i] * math.exp(log_b[t, i] - m)
            total += phi[i]
        if not total > 0.0:
            return weights
        for j in range(n_states):
            acc = 0.0
            for i in range(n_states):
                acc += phi[i] * tpm[i, j]
            weights[t + 1, j] = acc / total
    return weights


@numba.njit(cache=True)
def viterbi_path(log_delta, log_tpm, log_b):
    """
    对数空间Viterbi解码，相等时取较小的状态编号

    返回:
        (状态序列（从0开始）, 最优路径的对数联合概率)
    """
    n_steps, n_states = log_b.shape
    score = np.empty((n_steps, n_states))
    back = np.zeros((n_steps, n_states), dtype=np.int64)
    for i in range(n_states):
        score[0, i] = log_delta[i] + log_b[0, i]

    for t in range(1, n_steps):
        for j in range(n_states):
            best = -np.inf
            arg = 0
            for i in range(n_states):
                value = score[t - 1, i] + log_tpm[i, j]
                if value > best:
                    best = value
                    arg = i
            score[t, j] = best + log_b[t, j]
            back[t, j] = arg

    path = np.empty(n_steps, dtype=np.int64)
    best = -np.inf
    arg = 0
    for i in range(n_states):
        if score[n_steps - 1, i] > best:
            best = score[n_steps - 1, i]
            arg = i
    path[n_steps - 1] = arg
    for t in range(n_steps - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


@numba.njit(cache=True)
def sample_markov_chain(cum_delta, cum_tpm, uniforms):
    """
    用预先抽取的均匀随机数模拟马尔可夫链

    参数:
        cum_delta: 初始分布的累积和
        cum_tpm: 转移矩阵按行累积和
        uniforms: 长度为T的(0,1)均匀随机数
    返回:
        状态序列（从0开始）
    """
    n_steps = uniforms.shape[0]
    n_states = cum_delta.shape[0]
    states = np.empty(n_steps, dtype=np.int64)
    state = n_states - 1
    for i in range(n_states):
        if uniforms[0] < cum_delta[i]:
            state = i
            break
    states[0] = state
    for t in range(1, n_steps):
        row = states[t - 1]
        state = n_states - 1
        for j in range(n_states):
            if uniforms[t] < cum_tpm[row, j]:
                state = j
                break
        states[t] = state
    return states
