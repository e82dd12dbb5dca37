"""Exception hierarchy shared by all partcouple modules."""


class CouplingError(Exception):
    """Base class for every error raised by partcouple."""


# meshdata
class MeshError(CouplingError):
    pass


class ZeroVertices(MeshError):
    pass


class DegenerateSegment(MeshError):
    pass


class DuplicateVertices(MeshError):
    pass


class FieldMeshMismatch(MeshError):
    pass


# mapping
class EmptyMesh(MeshError):
    pass


# reconstruct
class ReconstructionError(CouplingError):
    pass


class DuplicatePoints(ReconstructionError):
    pass


class SingularRbfSystem(ReconstructionError):
    pass


# acceleration
class LengthMismatch(CouplingError):
    pass


# config
class ConfigNotFound(CouplingError):
    pass


class ConfigInvalid(CouplingError):
    """Raised with a list of ``field: problem`` diagnostics."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# comm
class CommError(CouplingError):
    pass


class ChannelError(CommError):
    pass


class ConnectTimeout(CommError):
    pass


class VersionMismatch(CommError):
    pass


class PeerClosed(CommError):
    pass


class FrameCorrupt(CommError):
    pass


class DecodeMismatch(CommError):
    pass


# kernel
class KernelError(CouplingError):
    pass


class HandshakeMismatch(KernelError):
    pass


class DtTooLarge(KernelError):
    pass


class UnfulfilledAction(KernelError):
    pass


class ActionNotPending(KernelError):
    pass


class NotInitialized(KernelError):
    pass


class CouplingFinished(KernelError):
    pass


# adapter
class AdapterError(CouplingError):
    pass


class EmptyCouplingBoundary(AdapterError):
    pass


class NeitherReadNorWrite(AdapterError):
    pass


class NonFiniteSample(AdapterError):
    def __init__(self, location, value):
        self.location = tuple(location)
        self.value = value
        super().__init__(f"non-finite sample {value!r} at vertex {self.location}")


class ExpressionNotCreated(AdapterError):
    pass


class KindMismatch(AdapterError):
    pass


class ParallelPointSourcesUnsupported(AdapterError):
    pass


class CheckpointActionNotPending(AdapterError):
    pass


class NoCheckpointStored(AdapterError):
    pass


class OwnershipGap(AdapterError):
    pass


class OwnershipOverlap(AdapterError):
    pass


# mockkernel
class UnknownOperation(CouplingError):
    pass


class QueueExhausted(CouplingError):
    pass


# heatdemo
class SolveDiverged(CouplingError):
    pass


class EdgeNotOnBoundary(CouplingError):
    pass
