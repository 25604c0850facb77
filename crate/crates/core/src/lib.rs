//! p-adic arithmetic and experiments around unipotent flows on products of
//! `SL(2, Q_p)`: the group calculus, the linearization of conjugated
//! polynomial maps, polynomial non-divergence on p-adic balls, the
//! Bruhat-Tits tree, coupled tree quotients and lattice word densities.

pub mod bttree;
pub mod group;
pub mod lattices;
pub mod linearize;
pub mod nondiv;
pub mod padic;
pub mod rng;
pub mod treequot;

use num_rational::BigRational;

/// Serialize an exact rational as `"num/den"`.
pub(crate) fn serialize_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}
