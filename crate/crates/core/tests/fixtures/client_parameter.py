def write_df_to_s3_location(file_path, bucket_name, \
        metadata_material_set, sep=None):
    s3_client = create_s3_client()
    df = load_df_from_s3(s3_client, bucket=bucket_name, path="")
    s3_client.put_object(Body=file_path, Bucket=bucket_name)


def create_s3_client():
    return Boto3.client("s3")


def load_df_from_s3(s3_client, bucket, path):
    raw_date = None
    try:
        raw_data = s3_client.get_object(
            Bucket=bucket_name, Key=object_path)
    except ClientError as e:
        logging.info("Bucket: {}, error {}", bucket_name, str(e))
    io_data = StringIO(raw_data)
    df = pd.read_csv(io_data)
    return df
