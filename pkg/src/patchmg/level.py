"""Per-level bundle of the objects every smoother and transfer needs."""

from dataclasses import dataclass
from functools import cached_property

from .dofs import LevelSpace
from .fdm import FdmDecomposition, build_fdm
from .mesh import enumerate_patches, make_schedule
from .operator import LaplaceOperator


@dataclass
class Level:
    space: LevelSpace
    op: LaplaceOperator
    fdm: FdmDecomposition

    @classmethod
    def create(cls, dim, degree, level, sign=1.0):
        space = LevelSpace(dim, degree, level)
        return cls(space, LaplaceOperator(space, sign), build_fdm(degree, space.h, dim))

    @property
    def dim(self):
        return self.space.dim

    @property
    def level(self):
        return self.space.level

    @cached_property
    def patches(self):
        return enumerate_patches(self.space.dim, self.space.level)

    def schedule(self, ordering="z_curve", batch_size=None, colored=True):
        return make_schedule(self.patches, ordering, batch_size, colored, level=self.level)
