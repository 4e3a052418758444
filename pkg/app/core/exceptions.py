class TclsimError(Exception):
    """Base class for every error raised by the simulator."""


class ModelDivergenceError(TclsimError):
    """Evaporator temperature left the band where the refrigerant model holds."""

    def __init__(self, T_1: float):
        self.T_1 = T_1
        super().__init__(f"evaporator temperature {T_1:.3f} °C outside [-50, 60] °C; integration diverged")


class IntegrationError(TclsimError):
    def __init__(self, message: str, house_id: str | None = None):
        self.house_id = house_id
        if house_id is not None:
            message = f"{message} (house {house_id})"
        super().__init__(message)


class NeverOffError(TclsimError):
    """Heat injection meets or exceeds what the AC can remove; the thermostat never reaches T_-."""


class NeverOnError(TclsimError):
    """Injection is too low for the house to ever warm to T_+."""


class SynchronizationTimeout(TclsimError):
    pass


class ProtocolError(TclsimError):
    """A single wire line could not be decoded. The connection stays usable."""

    def __init__(self, message: str, seq: int | None = None):
        self.seq = seq
        super().__init__(message)


class TraceIngestionError(TclsimError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class InsufficientDataError(TclsimError):
    pass


class UndefinedNormalizationError(TclsimError):
    pass


class AccountingError(TclsimError):
    pass


class ConfigError(TclsimError):
    pass


class ExperimentError(TclsimError):
    def __init__(self, message: str, sim_time: float, house_id: str | None = None):
        self.sim_time = sim_time
        self.house_id = house_id
        where = f"t={sim_time:.1f}s" + (f", house {house_id}" if house_id else "")
        super().__init__(f"{message} [{where}]")
