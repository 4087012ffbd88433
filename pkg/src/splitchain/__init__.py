"""Deterministic simulator and exact analyzer for ecosystems of permissioned
blockchains that grow by splitting chains in two and shrink by fusing them.

The library has three layers:

* pure math (:mod:`splitchain.analysis`) — exact hypergeometric analysis of
  how faulty validators spread across the children of a division;
* protocol model (:mod:`splitchain.model`, :mod:`splitchain.consensus`,
  :mod:`splitchain.assignment`, :mod:`splitchain.manager`,
  :mod:`splitchain.xchain`) — ledgers, quorum certificates, the division
  protocol, and cross-chain knowledge/asset transfer;
* harness (:mod:`splitchain.netsim`, :mod:`splitchain.cli`) — a seeded
  discrete-event network with fault injection, scenario files, and CSV
  reporting.
"""

__version__ = "0.1.0"
