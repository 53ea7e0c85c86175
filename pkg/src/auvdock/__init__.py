"""AUV docking reinforcement-learning workbench.

A 6-DoF vehicle simulator with a funnel docking station, noisy relative-pose
observations, a shaped docking reward, vectorized rollout collection and a
PPO trainer, driven from the ``auvdock`` command line.
"""

__version__ = "0.1.0"
