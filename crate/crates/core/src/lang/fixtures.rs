//! Small hand-written programs used by tests, benches and docs.

/// Milky Way mass model with two satellite galaxies.
pub const MILKY_WAY: &str = "\
one := 1; t := 2; f := 5; ten := 10
z1 ~ normal(f, ten)          // log of the mass of the galaxy
mass1 := z1 * t
z2 ~ normal(mass1, f)        // first satellite
obs(normal(z2, one), ten)
mass2 := z1 + f
z3 ~ normal(mass2, t)        // second satellite
obs(normal(z3, one), 3)
";

/// Two-cluster model over four data points; cluster membership is decided
/// by thresholding a standard-normal draw.
pub const CLUSTERING: &str = "\
u := 0; v := 5; w := 1
z1 ~ normal(u, v); z2 ~ normal(u, v)
z3 ~ normal(u, w); mu3 := if (z3 > u) z1 else z2; obs(normal(mu3, w), -1.9)
z4 ~ normal(u, w); mu4 := if (z4 > u) z1 else z2; obs(normal(mu4, w), -2.2)
z5 ~ normal(u, w); mu5 := if (z5 > u) z1 else z2; obs(normal(mu5, w), 2.4)
z6 ~ normal(u, w); mu6 := if (z6 > u) z1 else z2; obs(normal(mu6, w), 2.2)
";

/// A multimodal three-variable program with the `mm` procedure.
pub const MULMOD_EXAMPLE: &str = "\
a := 3.93; b := 348.16; c := 57.5; d := 14.04; e := 40.34
z1 ~ normal(a, b); z2 ~ normal(z1, c); z3 := mm(z1)
obs(normal(z2, d), 53.97); obs(normal(z3, e), 0.12)
";
