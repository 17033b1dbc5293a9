"""plumenet tests - one module per package module, runnable with pytest or directly"""
