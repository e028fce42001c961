from .mpc_agent import MPCAgent
