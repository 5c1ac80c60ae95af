#include <pybind11/pybind11.h>
PYBIND11_MODULE(_oamsdm, m) { m.doc() = "stub"; }
