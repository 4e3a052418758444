from enum import Enum


class CompressorState(str, Enum):
    ON = "on"
    OFF = "off"
    LOCKED_OFF = "locked_off"
    LOCKED_ON = "locked_on"


class SwitchTarget(str, Enum):
    ON = "on"
    OFF = "off"
    NO_CHANGE = "no_change"


class CommandSource(str, Enum):
    THERMOSTAT = "thermostat"
    AGGREGATOR = "aggregator"


class RequestKind(str, Enum):
    ON = "on"
    OFF = "off"


class PartitionTag(str, Enum):
    LOCAL_VIRTUAL = "local_virtual"
    REMOTE_PLANT = "remote_plant"


class SyncDirection(str, Enum):
    ALL_ON = "all_on"
    ALL_OFF = "all_off"


class ControllerKind(str, Enum):
    PI = "pi"
    MARKOV = "markov"
    PEM = "pem"


class SignalType(str, Enum):
    REGD = "regd"
    SQUARE = "square"


class Condition(str, Enum):
    NOMINAL = "nominal"
    EXTREME = "extreme"


class ChannelMode(str, Enum):
    PERFECT = "perfect"
    IMPAIRED = "impaired"


class MessageType(str, Enum):
    CMD = "cmd"
    MEAS = "meas"
    ERR = "err"


class PlantMode(str, Enum):
    IN_PROCESS = "in_process"
    TCP = "tcp"


class HouseAssignment(str, Enum):
    UNIFORM = "uniform"
    RANDOM = "random"
