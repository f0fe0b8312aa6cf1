from .hilbert import Truncation, JointState, DensityMatrix, GBParams
from .hamiltonian import SystemParams, OperatorMatrix, Frame
from .lindblad import JumpChannel, ChannelKind, TimeGrid
from .mcwf import Protocol, ProtocolKind, TrajectoryConfig
from .preset import ParameterPreset
