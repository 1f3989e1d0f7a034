//! Every example under `examples/` must run to completion.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            #![allow(dead_code)]
            include!(concat!("../examples/", stringify!($name), ".rs"));

            #[test]
            fn runs() {
                run_example().unwrap();
            }
        }
    };
}

example!(kernel_moments);
example!(local_linear);
example!(weighting_schemes);
example!(site_geometry);
example!(matern_field);
example!(simulate_dataset);
example!(covariance_surfaces);
example!(inverse_regression);
example!(edr_directions);
example!(cross_validation);
example!(fit_pipeline);
example!(simulation_study);
