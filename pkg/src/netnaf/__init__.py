"""netnaf: model-free networked control with continuous Q-learning.

A dense-network controller with a quadratic advantage head is trained to
stabilize an unknown plant across two randomly delayed channels, acting on
an extended state of recent outputs and issued inputs instead of the
unobservable plant state.
"""

from .agent import (ExtendedState, HistoryBuffer, OrnsteinUhlenbeck, OuSettings,
                    ReplayMemory, Trainer, TrainSettings, Transition, LoopSetup,
                    batch_loss_and_grad, build_extended_state, extended_state_dim,
                    noise_scale, run_episode, td_target, transition_reward)
from .config import ExperimentConfig, load_config, parse_config
from .delays import (Actuator, DelayedChannel, DelayModel, no_delay_model,
                     sample_delay)
from .errors import (CheckpointFormatError, ConfigError, DimensionError,
                     DivergenceError, NumericsError)
from .naf import (EXP_CLAMP, NafEval, advantage, assemble_scale_matrix, evaluate,
                  head_gradients, q_value, tri_size)
from .nn import (AdamState, DenseLayer, ForwardTrace, MlpNetwork, adam_step,
                 backward, bind_flat_storage, flatten_params, forward,
                 init_network, load_checkpoint, parameter_layout,
                 save_checkpoint, set_params, soft_update)
from .plant import (ChuaCircuit, InputSchedule, SensorMap, chua_sensor,
                    integrate, integrate_trajectory, sense)
from .reward import (RewardWeights, input_history_reward, output_change_reward,
                     output_history_reward, total_reward)

__version__ = "0.1.0"
