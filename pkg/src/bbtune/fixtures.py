"""Specifications bundled as examples and test inputs."""
from __future__ import annotations

from .grammar import parse

MOTZKIN = """\
-- Motzkin trees
Motzkin = Leaf (3)
        | Unary Motzkin
        | Binary Motzkin Motzkin (2) [0.3].
"""

BINARY_TREES = """\
B = Leaf | Node B B.
"""

SEQ_Z = """\
L = Seq(Z).
"""

TWO_LETTER_WORDS = """\
F = Seq(Letter).
Letter = A [0.7] | B.
"""

RUNNING_EXAMPLE = """\
-- trees whose odd levels carry multisets of even-level nodes
@marker U V.
T = Node U MSet(Q).
Q = Leaf V | Inner T T.
"""

TREE_DEGREES = """\
-- plane trees with node degrees 0..9, degrees >= 2 at 1% each
T = D0
  | D1 T
  | D2 T T [0.01]
  | D3 T T T [0.01]
  | D4 T T T T [0.01]
  | D5 T T T T T [0.01]
  | D6 T T T T T T [0.01]
  | D7 T T T T T T T [0.01]
  | D8 T T T T T T T T [0.01]
  | D9 T T T T T T T T T [0.01].
"""

LAMBDA_TERMS = """\
-- plain lambda terms with unary de Bruijn indices, the first nine at 8% each
L = Abs L | App L L | D.
D = I0 [0.08]
  | I1 (2) [0.08]
  | I2 (3) [0.08]
  | I3 (4) [0.08]
  | I4 (5) [0.08]
  | I5 (6) [0.08]
  | I6 (7) [0.08]
  | I7 (8) [0.08]
  | I8 (9) [0.08]
  | Rest (10) Seq(Z).
"""

PARTITIONS = """\
-- multisets of particles; a particle is a non-empty multiset of colours
P = MSet(Particle).
Particle = MSet1(C1 [0.03] | C2 [0.07] | C3 [0.1] | C4 [0.3] | C5).
"""

EVEN_A_WORDS = """\
-- words over {a, b} with an even number of a's; E is start and final
E = A O | B E | Eps (0).
O = A E | B O.
"""

EVEN_LENGTH_WORDS = """\
-- words of even length; E is start and final
E = A O | Eps (0).
O = A E.
"""

ALL = {
    "motzkin": MOTZKIN,
    "binary": BINARY_TREES,
    "seqz": SEQ_Z,
    "words": TWO_LETTER_WORDS,
    "running": RUNNING_EXAMPLE,
    "degrees": TREE_DEGREES,
    "lambda": LAMBDA_TERMS,
    "partitions": PARTITIONS,
    "even_a": EVEN_A_WORDS,
    "even_length": EVEN_LENGTH_WORDS,
}


def load(name: str):
    return parse(ALL[name])
