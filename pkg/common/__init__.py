#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
公共模块：分布、HMM模型与核心递推
"""
