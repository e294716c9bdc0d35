"""Integer tags shared by the python layer and the compiled kernels."""

# operator kinds
OP_ZERO = 0
OP_INDICATOR = 1
OP_CONVEX = 2

# domain kinds
DOM_WHOLE = 0
DOM_HALFLINE = 1
DOM_BOX = 2
DOM_BALL = 3
DOM_HALFSPACES = 4

# convex potentials for subdiff_convex
PHI_QUADRATIC = 0
PHI_L1 = 1
PHI_LOGCOSH = 2

# drift terms
B_LINEAR = 0
B_CONST = 1
B_CLAMP = 2
B_TANH = 3
B_AFFINE_CLAMP = 4

# diffusion terms
S_CONST = 0
S_NORM_CLAMP = 1
S_DIAG_CLAMP = 2

# jump terms
F_CONST = 0
F_MARK_CONST = 1
F_LINEAR = 2
F_MARK_LINEAR = 3
F_MARK_CLAMP = 4
F_CLAMP = 5

# kernel status codes
ST_OK = 0
ST_EMPTY = 1
ST_NOCONV = 2
ST_NONFINITE = 3
