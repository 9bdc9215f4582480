pub mod bickley;
pub mod msm;
pub mod sindy;
pub mod sqrt;
