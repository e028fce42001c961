from .agent import Action, Agent
from .environment import Environment, Observation
from .runtime import Runtime
from .subscriber import Subscriber
