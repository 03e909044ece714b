import boto3


class S3(object):
    def __init__(self, **kwargs):
        self._client = None

    @property
    def client(self):
        if self._client is None:
            self._client = boto3.client('s3')
        return self._client

    def M1(self):
        try:
            client = self._client
            # put lifecycle
            response = client.put_bucket_lifecycle(
                Bucket=test_bucket, LifecycleConfiguration=config)
            time.sleep(4)
            response = client.get_bucket_lifecycle(Bucket=test_bucket)
            assert response
            response = client.delete_bucket_lifecycle(Bucket=test_bucket)
        except CosServiceError as e:
            if e.get_status_code() < 500:
                raise e
