"""
Numerical core: function distributions, contamination, robust mean
estimation, projected gradient descent and the experiment harness.
"""

from .domain import FeasibleDomain
from .filtering import FilterConfig, filter_mean
from .optimizer import robust_net_pgd, robust_pgd

__all__ = ['FeasibleDomain', 'FilterConfig', 'filter_mean', 'robust_net_pgd', 'robust_pgd']
