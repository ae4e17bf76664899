pub mod pred_oracle;
