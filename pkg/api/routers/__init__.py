"""API 路由包"""
__all__ = ["analysis", "bandwidth", "health", "simulation"]
