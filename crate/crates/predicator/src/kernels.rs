//! The bundled kernel corpus. Each kernel ships with a reference workload;
//! together they span predictable and data-random branches so that both
//! "convert" and "leave alone" are the right answer somewhere.

/// (name, IR text, reference inputs text).
pub const KERNELS: [(&str, &str, &str); 6] = [
    (
        "abs",
        include_str!("../kernels/abs.ir"),
        include_str!("../kernels/abs.in"),
    ),
    (
        "clampsum",
        include_str!("../kernels/clampsum.ir"),
        include_str!("../kernels/clampsum.in"),
    ),
    (
        "maxreduce",
        include_str!("../kernels/maxreduce.ir"),
        include_str!("../kernels/maxreduce.in"),
    ),
    (
        "sortcmp",
        include_str!("../kernels/sortcmp.ir"),
        include_str!("../kernels/sortcmp.in"),
    ),
    (
        "nested",
        include_str!("../kernels/nested.ir"),
        include_str!("../kernels/nested.in"),
    ),
    (
        "statemach",
        include_str!("../kernels/statemach.ir"),
        include_str!("../kernels/statemach.in"),
    ),
];

pub fn kernel(name: &str) -> Option<(&'static str, &'static str)> {
    KERNELS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, ir, inputs)| (*ir, *inputs))
}
