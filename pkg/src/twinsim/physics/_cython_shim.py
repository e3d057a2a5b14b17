"""No-op stand-ins for the cython module so the kernel runs uncompiled."""


class _Type:
    def __getitem__(self, item):
        return self

    def __call__(self, *args, **kwargs):
        return None


compiled = False

double = _Type()
int = _Type()  # noqa: A001 - mirrors cython.int
uchar = _Type()
void = _Type()
Py_ssize_t = _Type()


def cfunc(f):
    return f


def _directive(*args, **kwargs):
    def deco(f):
        return f

    return deco


boundscheck = _directive
wraparound = _directive
cdivision = _directive
