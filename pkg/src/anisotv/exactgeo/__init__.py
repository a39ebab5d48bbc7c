"""Exact geometry: shapes, curve measures, certificates."""
from .certificates import (CertificateField, CertificateReport, build_fractal_certificate,
                           certificate_by_name, check_certificate, fractal_target,
                           non_finite_field, non_finite_target, shape_battery,
                           signed_ic_field, signed_ic_target, triangle_certificate, zero_field)
from .measures import (Circle, CurveMeasure, FractalLumps, Polyline, Segment, fractal_measure,
                       ic_score, measure_of, measure_of_detailed)
from .radial import radial_density_ic_check
from .shapes import (Shape, aniso_perimeter, annulus, disc, empty, fractal_iterate, half_disc,
                     polygon, rectangle)
