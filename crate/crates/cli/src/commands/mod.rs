pub mod conformal;
pub mod coverage;
pub mod gen_data;
pub mod single_run;
