"""服务层：统计内核、模拟、分段、实验与分析流程"""
