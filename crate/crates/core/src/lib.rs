pub mod cex;
pub mod exec;
pub mod freegrp;
pub mod gog;
pub mod isosys;
pub mod mtree;
pub mod scalar;
